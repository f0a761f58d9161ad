#include "swarmnav/config.hpp"

#include "swarmnav/error.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace swarmnav {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool is_bare_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    }
    return true;
}

// Cuts a trailing comment, leaving '#' inside strings alone.
std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_str && c == '\\') {
            ++i;
        } else if (c == '"') {
            in_str = !in_str;
        } else if (c == '#' && !in_str) {
            return line.substr(0, i);
        }
    }
    return line;
}

class ValueParser {
public:
    ValueParser(const std::string& text, const std::string& where) : s_(text), where_(where) {}

    json parse_all() {
        json v = value();
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing characters");
        return v;
    }

private:
    const std::string& s_;
    std::string where_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where_, msg); }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    json value() {
        skip_ws();
        if (pos_ >= s_.size()) fail("missing value");
        const char c = s_[pos_];
        if (c == '"') return string();
        if (c == '[') return array();
        return scalar();
    }

    json string() {
        ++pos_;
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            char c = s_[pos_++];
            if (c == '\\') {
                if (pos_ >= s_.size()) fail("unterminated escape");
                const char e = s_[pos_++];
                switch (e) {
                    case 'n': c = '\n'; break;
                    case 't': c = '\t'; break;
                    case '"': c = '"'; break;
                    case '\\': c = '\\'; break;
                    default: fail(std::string("unsupported escape \\") + e);
                }
            }
            out += c;
        }
        if (pos_ >= s_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    json array() {
        ++pos_;
        json arr = json::array();
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
            ++pos_;
            return arr;
        }
        for (;;) {
            arr.push_back(value());
            skip_ws();
            if (pos_ >= s_.size()) fail("unterminated array");
            if (s_[pos_] == ',') {
                ++pos_;
                skip_ws();
                if (pos_ < s_.size() && s_[pos_] == ']') {
                    ++pos_;
                    return arr;
                }
                continue;
            }
            if (s_[pos_] == ']') {
                ++pos_;
                return arr;
            }
            fail("expected ',' or ']' in array");
        }
    }

    json scalar() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' &&
               !std::isspace(static_cast<unsigned char>(s_[pos_]))) {
            ++pos_;
        }
        std::string tok = s_.substr(start, pos_ - start);
        if (tok == "true") return true;
        if (tok == "false") return false;
        std::string body = tok, sign;
        if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
            sign = body.substr(0, 1);
            body = body.substr(1);
        }
        if (body == "inf") return sign == "-" ? -std::numeric_limits<double>::infinity()
                                             : std::numeric_limits<double>::infinity();
        if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
        std::string digits;
        for (std::size_t i = 0; i < body.size(); ++i) {
            if (body[i] == '_') {
                if (i == 0 || i + 1 == body.size() || !std::isdigit(static_cast<unsigned char>(body[i - 1])) ||
                    !std::isdigit(static_cast<unsigned char>(body[i + 1]))) {
                    fail("misplaced '_' in number '" + tok + "'");
                }
                continue;
            }
            digits += body[i];
        }
        if (digits.empty()) fail("missing value");
        const bool is_float = digits.find_first_of(".eE") != std::string::npos;
        const std::string text = (sign == "-" ? "-" : "") + digits;
        const char* first = text.data();
        const char* last = text.data() + text.size();
        if (!is_float) {
            std::int64_t v = 0;
            const auto r = std::from_chars(first, last, v);
            if (r.ec == std::errc() && r.ptr == last) return v;
        } else if (std::isdigit(static_cast<unsigned char>(digits.front())) &&
                   std::isdigit(static_cast<unsigned char>(digits.back()))) {
            double v = 0.0;
            const auto r = std::from_chars(first, last, v);
            if (r.ec == std::errc() && r.ptr == last) return v;
        }
        fail("cannot parse '" + tok + "' (strings need double quotes)");
    }
};

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, r.ptr);
    if (s.find_first_of(".en") == std::string::npos) s += ".0";
    // to_chars writes 1e-05; TOML wants a digit after the exponent sign, which it has.
    return s;
}

std::string format_value(const json& v) {
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
    if (v.is_number_float()) return format_double(v.get<double>());
    if (v.is_string()) {
        std::string out = "\"";
        for (char c : v.get<std::string>()) {
            if (c == '"' || c == '\\') out += '\\';
            if (c == '\n') {
                out += "\\n";
                continue;
            }
            if (c == '\t') {
                out += "\\t";
                continue;
            }
            out += c;
        }
        return out + "\"";
    }
    if (v.is_array()) {
        std::string out = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out += ", ";
            out += format_value(v[i]);
        }
        return out + "]";
    }
    throw ContractViolation("to_toml: unsupported value " + v.dump());
}

// Reads typed fields and remembers which keys were consumed.
class Reader {
public:
    explicit Reader(const json& tree) : tree_(tree) {
        if (!tree_.is_object()) throw ConfigError("config", "expected a table of sections");
    }

    const json* find(const std::string& sec, const std::string& key) {
        used_.insert(sec + "." + key);
        const auto s = tree_.find(sec);
        if (s == tree_.end() || !s->is_object()) return nullptr;
        const auto k = s->find(key);
        return k == s->end() ? nullptr : &*k;
    }

    const json& require(const std::string& sec, const std::string& key) {
        const json* v = find(sec, key);
        if (!v) throw ConfigError(sec + "." + key, "required field is missing");
        return *v;
    }

    static double as_double(const json& v, const std::string& field) {
        if (!v.is_number()) throw ConfigError(field, "expected a number, got " + v.dump());
        return v.get<double>();
    }

    static std::int64_t as_int(const json& v, const std::string& field) {
        if (!v.is_number_integer()) throw ConfigError(field, "expected an integer, got " + v.dump());
        return v.get<std::int64_t>();
    }

    void get(const std::string& sec, const std::string& key, double& out) {
        if (const json* v = find(sec, key)) out = as_double(*v, sec + "." + key);
    }
    void get(const std::string& sec, const std::string& key, std::int64_t& out) {
        if (const json* v = find(sec, key)) out = as_int(*v, sec + "." + key);
    }
    void get(const std::string& sec, const std::string& key, int& out) {
        if (const json* v = find(sec, key)) {
            const std::int64_t x = as_int(*v, sec + "." + key);
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
                throw ConfigError(sec + "." + key, "out of range");
            }
            out = static_cast<int>(x);
        }
    }
    void get(const std::string& sec, const std::string& key, std::uint64_t& out) {
        if (const json* v = find(sec, key)) {
            const std::int64_t x = as_int(*v, sec + "." + key);
            if (x < 0) throw ConfigError(sec + "." + key, "must be >= 0");
            out = static_cast<std::uint64_t>(x);
        }
    }
    void get(const std::string& sec, const std::string& key, std::string& out) {
        if (const json* v = find(sec, key)) {
            if (!v->is_string()) throw ConfigError(sec + "." + key, "expected a string, got " + v->dump());
            out = v->get<std::string>();
        }
    }
    void get(const std::string& sec, const std::string& key, Rect& out) {
        if (const json* v = find(sec, key)) {
            const std::string field = sec + "." + key;
            if (!v->is_array() || v->size() != 4) {
                throw ConfigError(field, "expected [x_min, y_min, x_max, y_max]");
            }
            out = Rect{as_double((*v)[0], field), as_double((*v)[1], field), as_double((*v)[2], field),
                       as_double((*v)[3], field)};
        }
    }

    void reject_unknown() const {
        for (const auto& [sec, table] : tree_.items()) {
            if (!table.is_object()) throw ConfigError(sec, "unknown top-level key");
            for (const auto& [key, value] : table.items()) {
                const std::string field = sec.empty() ? key : sec + "." + key;
                if (!used_.count(sec + "." + key)) throw ConfigError(field, "unknown field");
            }
        }
    }

private:
    const json& tree_;
    std::set<std::string> used_;
};

}  // namespace

json parse_toml_value(const std::string& text, const std::string& where) {
    return ValueParser(text, where).parse_all();
}

json parse_toml(const std::string& text, const std::string& source) {
    json tree = json::object();
    std::string section;
    tree[section] = json::object();
    std::set<std::string> headers;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno);
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) throw ConfigError(where, "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!is_bare_key(section)) throw ConfigError(where, "bad section name '" + section + "'");
            if (!headers.insert(section).second) throw ConfigError(where, "duplicate section [" + section + "]");
            if (!tree.contains(section)) tree[section] = json::object();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!is_bare_key(key)) throw ConfigError(where, "bad key '" + key + "'");
        if (tree[section].contains(key)) throw ConfigError(where, "duplicate key '" + key + "'");
        tree[section][key] = parse_toml_value(line.substr(eq + 1), where);
    }
    if (tree[""].empty()) tree.erase("");
    return tree;
}

std::string to_toml(const json& tree) {
    std::string out;
    auto emit_table = [&](const json& table) {
        for (const auto& [k, v] : table.items()) out += k + " = " + format_value(v) + "\n";
    };
    if (tree.contains("")) emit_table(tree.at(""));
    for (const auto& [sec, table] : tree.items()) {
        if (sec.empty()) continue;
        if (!out.empty()) out += "\n";
        out += "[" + sec + "]\n";
        emit_table(table);
    }
    return out;
}

void RunConfig::validate() const {
    train.validate();
    if (checkpoint_every < 0) throw ConfigError("run.checkpoint_every", "must be >= 0");
    if (output_root.empty()) throw ConfigError("run.output_root", "must not be empty");
}

RunConfig run_config_from_tree(const json& tree) {
    Reader r(tree);
    RunConfig c;
    TrainConfig& t = c.train;

    r.get("run", "output_root", c.output_root);
    r.get("run", "checkpoint_every", c.checkpoint_every);

    t.total_episodes = Reader::as_int(r.require("train", "episodes"), "train.episodes");
    r.get("train", "seed", t.seed);
    r.get("train", "workers", t.workers);

    PpoConfig& p = t.ppo;
    r.get("ppo", "gamma", p.gamma);
    r.get("ppo", "clip_eps", p.clip_eps);
    r.get("ppo", "epochs", p.epochs);
    r.get("ppo", "minibatch", p.minibatch);
    r.get("ppo", "rollout_episodes", p.rollout_episodes);
    r.get("ppo", "lr", p.lr);
    r.get("ppo", "value_loss_coef", p.value_loss_coef);
    r.get("ppo", "entropy_coef", p.entropy_coef);
    r.get("ppo", "max_grad_norm", p.max_grad_norm);
    r.get("ppo", "reward_scale", p.reward_scale);

    r.get("sim", "dt", t.env.sim.dt);
    r.get("sim", "v_max", t.env.sim.v_max);
    r.get("env", "max_steps", t.env.max_steps);

    RewardConfig& w = t.env.reward;
    r.get("reward", "eps_arr", w.eps_arr);
    r.get("reward", "eps_cav", w.eps_cav);
    r.get("reward", "delta_cav", w.delta_cav);
    r.get("reward", "arrival", w.arrival);
    r.get("reward", "collision", w.collision);
    r.get("reward", "time_total", w.time_total);
    r.get("reward", "w_arr", w.w_arr);
    r.get("reward", "w_cav", w.w_cav);
    r.get("reward", "w_tme", w.w_tme);
    r.get("reward", "w_acc", w.w_acc);
    t.env.sim.arrival_radius = w.eps_arr;

    ScenarioConfig& s = t.scenario;
    r.get("scenario", "p_geo", s.p_geo);
    r.get("scenario", "max_agents", s.max_agents);
    r.get("scenario", "fixed_agents", s.fixed_agents);
    r.get("scenario", "arena", s.arena);
    r.get("scenario", "min_separation", s.min_separation);
    r.get("scenario", "min_route_length", s.min_route_length);
    r.get("scenario", "placement_attempts", s.placement_attempts);

    const json& enc = r.require("network", "encoder");
    if (!enc.is_string()) throw ConfigError("network.encoder", "expected \"lstm\" or \"occupancy\"");
    EncoderKind kind;
    try {
        kind = encoder_from_string(enc.get<std::string>());
    } catch (const ConfigError& e) {
        throw ConfigError("network.encoder", "expected \"lstm\" or \"occupancy\", got " + enc.dump());
    }
    NetworkDims d = NetworkDims::policy(kind);
    r.get("network", "hidden", d.hidden);
    r.get("network", "layer1", d.layer1);
    r.get("network", "layer2", d.layer2);
    r.get("network", "grid_radial", d.grid_radial);
    r.get("network", "grid_angular", d.grid_angular);
    t.policy_dims = d;
    t.value_dims = d;
    t.value_dims.outputs = 1;
    t.value_dims.log_std = false;
    r.get("network", "d_norm", t.env.scaling.distance);
    r.get("network", "r_max", t.env.scaling.r_max);
    r.get("network", "forget_bias", t.init.forget_bias);
    r.get("network", "log_std_init", t.init.log_std);
    r.get("network", "forward_bias", t.init.forward_bias);

    r.reject_unknown();
    if (d.hidden < 1) throw ConfigError("network.hidden", "must be >= 1");
    if (d.layer1 < 1) throw ConfigError("network.layer1", "must be >= 1");
    if (d.layer2 < 1) throw ConfigError("network.layer2", "must be >= 1");
    if (d.grid_radial < 1) throw ConfigError("network.grid_radial", "must be >= 1");
    if (d.grid_angular < 1) throw ConfigError("network.grid_angular", "must be >= 1");
    c.validate();
    return c;
}

json run_config_to_tree(const RunConfig& c) {
    const TrainConfig& t = c.train;
    const auto& p = t.ppo;
    const auto& w = t.env.reward;
    const auto& s = t.scenario;
    const auto& d = t.policy_dims;
    json tree = json::object();
    tree["run"] = {{"output_root", c.output_root}, {"checkpoint_every", c.checkpoint_every}};
    tree["train"] = {{"episodes", t.total_episodes}, {"seed", t.seed}, {"workers", t.workers}};
    tree["ppo"] = {{"gamma", p.gamma},
                   {"clip_eps", p.clip_eps},
                   {"epochs", p.epochs},
                   {"minibatch", p.minibatch},
                   {"rollout_episodes", p.rollout_episodes},
                   {"lr", p.lr},
                   {"value_loss_coef", p.value_loss_coef},
                   {"entropy_coef", p.entropy_coef},
                   {"max_grad_norm", p.max_grad_norm},
                   {"reward_scale", p.reward_scale}};
    tree["sim"] = {{"dt", t.env.sim.dt}, {"v_max", t.env.sim.v_max}};
    tree["env"] = {{"max_steps", t.env.max_steps}};
    tree["reward"] = {{"eps_arr", w.eps_arr},   {"eps_cav", w.eps_cav},       {"delta_cav", w.delta_cav},
                      {"arrival", w.arrival},   {"collision", w.collision},   {"time_total", w.time_total},
                      {"w_arr", w.w_arr},       {"w_cav", w.w_cav},           {"w_tme", w.w_tme},
                      {"w_acc", w.w_acc}};
    tree["scenario"] = {{"p_geo", s.p_geo},
                        {"max_agents", s.max_agents},
                        {"fixed_agents", s.fixed_agents},
                        {"arena", {s.arena.x_min, s.arena.y_min, s.arena.x_max, s.arena.y_max}},
                        {"min_separation", s.min_separation},
                        {"min_route_length", s.min_route_length},
                        {"placement_attempts", s.placement_attempts}};
    tree["network"] = {{"encoder", to_string(d.encoder)},
                       {"hidden", d.hidden},
                       {"layer1", d.layer1},
                       {"layer2", d.layer2},
                       {"grid_radial", d.grid_radial},
                       {"grid_angular", d.grid_angular},
                       {"d_norm", t.env.scaling.distance},
                       {"r_max", t.env.scaling.r_max},
                       {"forget_bias", t.init.forget_bias},
                       {"log_std_init", t.init.log_std},
                       {"forward_bias", t.init.forward_bias}};
    // seed is unsigned; keep it a plain integer in the file
    tree["train"]["seed"] = static_cast<std::int64_t>(t.seed);
    return tree;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return run_config_from_tree(parse_toml(ss.str(), path));
}

void apply_override(json& tree, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ConfigError(assignment, "override must look like section.key=value");
    }
    const std::string sec = trim(assignment.substr(0, dot));
    const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
    if (!is_bare_key(sec) || !is_bare_key(key)) throw ConfigError(assignment, "bad field name");
    tree[sec][key] = parse_toml_value(assignment.substr(eq + 1), sec + "." + key);
}

std::string config_hash(const RunConfig& cfg) {
    json tree = run_config_to_tree(cfg);
    // Output location and parallelism do not change the results.
    tree["run"].erase("output_root");
    tree["run"].erase("checkpoint_every");
    tree["train"].erase("workers");
    const std::string text = to_toml(tree);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace swarmnav
