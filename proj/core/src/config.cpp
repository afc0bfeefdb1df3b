#include "keyflow/config.hpp"

#include "keyflow/errors.hpp"
#include "keyflow/textio.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace keyflow {

NetConfig RunConfig::net(int vocab_size) const {
    NetConfig net;
    net.feat_dim = feat_dim;
    net.lang_dim = lang_dim;
    net.time_dim = time_dim;
    net.mask_dim = mask_dim;
    net.enc_hidden = enc_hidden;
    net.vel_hidden = vel_hidden;
    net.vocab_size = vocab_size;
    return net;
}

void RunConfig::validate() const {
    if (profile != "desk" && profile != "full")
        throw DataError("config: unknown profile '" + profile + "'");
    if (n_points < 3) throw DataError("config: data.n_points must be >= 3");
    if (voxel_cell < 0.0) throw DataError("config: data.voxel_cell must be >= 0");
    if (flow_steps < 1) throw DataError("config: flow.steps must be >= 1");
    if (sigma_scale <= 0.0) throw DataError("config: flow.sigma_scale must be > 0");
    if (train_steps < 1) throw DataError("config: train.steps must be >= 1");
    if (lr <= 0.0) throw DataError("config: train.lr must be > 0");
    if (log_every < 1) throw DataError("config: train.log_every must be >= 1");
    if (eval_runs < 1) throw DataError("config: eval.runs must be >= 1");
    net(1).validate();
}

RunConfig desk_profile() { return RunConfig{}; }

RunConfig full_profile() {
    RunConfig cfg;
    cfg.profile = "full";
    cfg.n_points = 2048;
    cfg.voxel_cell = 0.004;
    cfg.feat_dim = 64;  // per-point generator input = 3+64+32+32+32 = 163
    cfg.lang_dim = 32;
    cfg.time_dim = 32;
    cfg.mask_dim = 32;
    cfg.enc_hidden = 256;
    cfg.vel_hidden = 256;
    cfg.flow_steps = 1000;
    cfg.sigma_scale = 0.5;
    cfg.train_steps = 200000;
    cfg.lr = 1e-4;
    cfg.log_every = 1000;
    return cfg;
}

namespace {

struct KeyBinding {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

std::string bool_text(bool v) { return v ? "true" : "false"; }

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw DataError("config: key '" + key + "' expects true or false, got '" + value + "'");
}

int parse_int_value(const std::string& key, const std::string& value) {
    try {
        return static_cast<int>(parse_int(value));
    } catch (const std::exception&) {
        throw DataError("config: key '" + key + "' expects an integer, got '" + value + "'");
    }
}

long parse_long_value(const std::string& key, const std::string& value) {
    try {
        return parse_int(value);
    } catch (const std::exception&) {
        throw DataError("config: key '" + key + "' expects an integer, got '" + value + "'");
    }
}

double parse_double_value(const std::string& key, const std::string& value) {
    try {
        return parse_double(value);
    } catch (const std::exception&) {
        throw DataError("config: key '" + key + "' expects a number, got '" + value + "'");
    }
}

// Fixed declaration order doubles as the canonical serialization order.
const std::vector<std::pair<std::string, KeyBinding>>& bindings() {
    static const std::vector<std::pair<std::string, KeyBinding>> table = [] {
        std::vector<std::pair<std::string, KeyBinding>> t;
        auto add = [&t](const std::string& key, std::function<std::string(const RunConfig&)> get,
                        std::function<void(RunConfig&, const std::string&, const std::string&)> set) {
            t.push_back({key, {std::move(get), std::move(set)}});
        };
        add("profile", [](const RunConfig& c) { return c.profile; },
            [](RunConfig& c, const std::string&, const std::string& v) { c.profile = v; });
        add("data.n_points", [](const RunConfig& c) { return std::to_string(c.n_points); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.n_points = parse_int_value(k, v); });
        add("data.voxel_cell", [](const RunConfig& c) { return format_double(c.voxel_cell); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.voxel_cell = parse_double_value(k, v); });
        add("model.feat_dim", [](const RunConfig& c) { return std::to_string(c.feat_dim); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.feat_dim = parse_int_value(k, v); });
        add("model.lang_dim", [](const RunConfig& c) { return std::to_string(c.lang_dim); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.lang_dim = parse_int_value(k, v); });
        add("model.time_dim", [](const RunConfig& c) { return std::to_string(c.time_dim); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.time_dim = parse_int_value(k, v); });
        add("model.mask_dim", [](const RunConfig& c) { return std::to_string(c.mask_dim); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.mask_dim = parse_int_value(k, v); });
        add("model.enc_hidden", [](const RunConfig& c) { return std::to_string(c.enc_hidden); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.enc_hidden = parse_int_value(k, v); });
        add("model.vel_hidden", [](const RunConfig& c) { return std::to_string(c.vel_hidden); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.vel_hidden = parse_int_value(k, v); });
        add("flow.steps", [](const RunConfig& c) { return std::to_string(c.flow_steps); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.flow_steps = parse_int_value(k, v); });
        add("flow.sigma_scale", [](const RunConfig& c) { return format_double(c.sigma_scale); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.sigma_scale = parse_double_value(k, v); });
        add("train.steps", [](const RunConfig& c) { return std::to_string(c.train_steps); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.train_steps = parse_long_value(k, v); });
        add("train.lr", [](const RunConfig& c) { return format_double(c.lr); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.lr = parse_double_value(k, v); });
        add("train.beta1", [](const RunConfig& c) { return format_double(c.beta1); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.beta1 = parse_double_value(k, v); });
        add("train.beta2", [](const RunConfig& c) { return format_double(c.beta2); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.beta2 = parse_double_value(k, v); });
        add("train.eps", [](const RunConfig& c) { return format_double(c.eps); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.eps = parse_double_value(k, v); });
        add("train.seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_long_value(k, v); });
        add("train.augment", [](const RunConfig& c) { return bool_text(c.augment); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.augment = parse_bool(k, v); });
        add("train.resample_each_step", [](const RunConfig& c) { return bool_text(c.resample_each_step); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.resample_each_step = parse_bool(k, v); });
        add("train.log_every", [](const RunConfig& c) { return std::to_string(c.log_every); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.log_every = parse_long_value(k, v); });
        add("eval.runs", [](const RunConfig& c) { return std::to_string(c.eval_runs); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_runs = parse_int_value(k, v); });
        add("eval.seed", [](const RunConfig& c) { return std::to_string(c.eval_seed); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_seed = parse_long_value(k, v); });
        return t;
    }();
    return table;
}

const KeyBinding* find_binding(const std::string& key) {
    for (const auto& [name, binding] : bindings())
        if (name == key) return &binding;
    return nullptr;
}

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream stream(text);
    std::string line;
    int line_no = 0;
    while (std::getline(stream, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("config: line " + std::to_string(line_no) + " is not 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw DataError("config: line " + std::to_string(line_no) + " is missing a key or value");
        entries.emplace_back(key, value);
    }

    RunConfig cfg;
    bool profile_seen = false;
    for (const auto& [key, value] : entries) {
        if (key != "profile") continue;
        if (profile_seen) throw DataError("config: duplicate profile key");
        profile_seen = true;
        if (value == "desk")
            cfg = desk_profile();
        else if (value == "full")
            cfg = full_profile();
        else
            throw DataError("config: unknown profile '" + value + "'");
    }

    for (const auto& [key, value] : entries) {
        if (key == "profile") continue;
        const KeyBinding* binding = find_binding(key);
        if (binding == nullptr) throw DataError("config: unknown key '" + key + "'");
        binding->set(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("config: cannot open " + path.string());
    std::ostringstream buffer;
    buffer << is.rdbuf();
    return parse_config(buffer.str());
}

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, binding] : bindings()) {
        out += key;
        out += " = ";
        out += binding.get(cfg);
        out += "\n";
    }
    return out;
}

std::string config_hash(const RunConfig& cfg) {
    const std::string text = serialize_config(cfg);
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    static const char digits[] = "0123456789abcdef";
    std::string hex(16, '0');
    for (int i = 15; i >= 0; --i) {
        hex[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return hex;
}

}  // namespace keyflow
