#include "editlab/config.hpp"

#include "editlab/errors.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace editlab {

namespace {

using nlohmann::json;

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
    throw ConfigError("config field '" + path + "': " + why);
}

class StrictObject {
public:
    StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
    }

    ~StrictObject() = default;

    template <typename T>
    void read(const char* key, T& out) {
        auto it = j_.find(key);
        if (it == j_.end()) return;
        seen_.push_back(key);
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            bad_field(path_ + "." + key, "has the wrong type");
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    const json* section(const char* key) {
        auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        seen_.push_back(key);
        return &*it;
    }

    void reject_unknown() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
                throw ConfigError("unknown config key '" +
                                  (path_.empty() ? it.key() : path_ + "." + it.key()) + "'");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

SpectrumSpec spectrum_from_json(const json& j) {
    SpectrumSpec s;
    StrictObject obj(j, "synth.spectrum");
    obj.read("d", s.d);
    obj.read("lambda_max", s.lambda_max);
    obj.read("decay", s.decay);
    obj.read("condition_cap", s.condition_cap);
    obj.reject_unknown();
    return s;
}

SynthConfig synth_from_json(const json& j, const SynthConfig& base) {
    SynthConfig s = base;
    StrictObject obj(j, "synth");
    obj.read("d_k", s.d_k);
    obj.read("d_v", s.d_v);
    obj.read("vocab", s.vocab);
    obj.read("n_subjects", s.n_subjects);
    obj.read("relations_per_subject", s.relations_per_subject);
    obj.read("variants_per_fact", s.variants_per_fact);
    obj.read("variant_cosine", s.variant_cosine);
    obj.read("variant_strength", s.variant_strength);
    obj.read("seed", s.seed);
    std::string mode;
    obj.read("key_mode", mode);
    if (!mode.empty()) {
        if (mode == "gaussian") s.key_mode = KeyMode::gaussian;
        else if (mode == "orthogonalized") s.key_mode = KeyMode::orthogonalized;
        else bad_field("synth.key_mode", "must be 'gaussian' or 'orthogonalized'");
    }
    if (const json* spec = obj.section("spectrum")) s.spectrum = spectrum_from_json(*spec);
    obj.reject_unknown();
    return s;
}

} // namespace

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.tolerance.relative_step = 0.05;
    return cfg;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg = default_experiment_config();
    StrictObject obj(j, "");
    obj.read("experiment", cfg.experiment);
    obj.read("seed", cfg.seed);
    obj.read("output_dir", cfg.output_dir);

    if (const json* synth = obj.section("synth")) cfg.synth = synth_from_json(*synth, cfg.synth);

    if (const json* rule = obj.section("rule")) {
        StrictObject r(*rule, "rule");
        r.read("kind", cfg.rule.kind);
        r.read("eigen_cutoff", cfg.rule.eigen_cutoff);
        r.reject_unknown();
    }
    if (const json* opt = obj.section("optimizer")) {
        StrictObject o(*opt, "optimizer");
        o.read("steps", cfg.optimizer.steps);
        o.read("learning_rate", cfg.optimizer.learning_rate);
        o.read("weight_decay", cfg.optimizer.weight_decay);
        o.read("convergence_prob", cfg.optimizer.convergence_prob);
        o.reject_unknown();
    }
    if (const json* tol = obj.section("tolerance")) {
        StrictObject t(*tol, "tolerance");
        t.read("tau", cfg.tolerance.tau);
        t.read("step", cfg.tolerance.step);
        t.read("relative_step", cfg.tolerance.relative_step);
        t.read("trials_per_radius", cfg.tolerance.trials_per_radius);
        t.read("success_rate", cfg.tolerance.success_rate);
        t.read("rho_max", cfg.tolerance.rho_max);
        t.read("seed", cfg.tolerance.seed);
        t.reject_unknown();
    }
    obj.reject_unknown();
    validate_config(cfg);
    return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["experiment"] = cfg.experiment;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    j["synth"] = {
        {"d_k", cfg.synth.d_k},
        {"d_v", cfg.synth.d_v},
        {"vocab", cfg.synth.vocab},
        {"n_subjects", cfg.synth.n_subjects},
        {"relations_per_subject", cfg.synth.relations_per_subject},
        {"variants_per_fact", cfg.synth.variants_per_fact},
        {"variant_cosine", cfg.synth.variant_cosine},
        {"variant_strength", cfg.synth.variant_strength},
        {"key_mode", cfg.synth.key_mode == KeyMode::gaussian ? "gaussian" : "orthogonalized"},
        {"seed", cfg.synth.seed},
        {"spectrum",
         {{"d", cfg.synth.spectrum.d},
          {"lambda_max", cfg.synth.spectrum.lambda_max},
          {"decay", cfg.synth.spectrum.decay},
          {"condition_cap", cfg.synth.spectrum.condition_cap}}},
    };
    j["rule"] = {{"kind", cfg.rule.kind}, {"eigen_cutoff", cfg.rule.eigen_cutoff}};
    j["optimizer"] = {{"steps", cfg.optimizer.steps},
                      {"learning_rate", cfg.optimizer.learning_rate},
                      {"weight_decay", cfg.optimizer.weight_decay},
                      {"convergence_prob", cfg.optimizer.convergence_prob}};
    j["tolerance"] = {{"tau", cfg.tolerance.tau},
                      {"step", cfg.tolerance.step},
                      {"relative_step", cfg.tolerance.relative_step},
                      {"trials_per_radius", cfg.tolerance.trials_per_radius},
                      {"success_rate", cfg.tolerance.success_rate},
                      {"rho_max", cfg.tolerance.rho_max},
                      {"seed", cfg.tolerance.seed}};
    return j;
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.rule.kind != "covariance" && cfg.rule.kind != "identity" &&
        cfg.rule.kind != "nullspace")
        bad_field("rule.kind", "must be covariance, identity or nullspace");
    if (cfg.rule.eigen_cutoff < 0.0) bad_field("rule.eigen_cutoff", "must be >= 0");
    if (cfg.optimizer.steps < 1) bad_field("optimizer.steps", "must be >= 1");
    if (!(cfg.optimizer.learning_rate > 0.0)) bad_field("optimizer.learning_rate", "must be > 0");
    if (cfg.optimizer.weight_decay < 0.0) bad_field("optimizer.weight_decay", "must be >= 0");
    if (!(cfg.optimizer.convergence_prob > 0.0 && cfg.optimizer.convergence_prob < 1.0))
        bad_field("optimizer.convergence_prob", "must be in (0,1)");
    if (!(cfg.tolerance.tau > 0.0 && cfg.tolerance.tau < 1.0))
        bad_field("tolerance.tau", "must be in (0,1)");
    if (!(cfg.tolerance.step > 0.0)) bad_field("tolerance.step", "must be > 0");
    if (cfg.tolerance.relative_step < 0.0) bad_field("tolerance.relative_step", "must be >= 0");
    if (cfg.tolerance.trials_per_radius < 1)
        bad_field("tolerance.trials_per_radius", "must be >= 1");
    if (!(cfg.tolerance.success_rate > 0.0 && cfg.tolerance.success_rate <= 1.0))
        bad_field("tolerance.success_rate", "must be in (0,1]");
    if (!(cfg.tolerance.rho_max > 0.0)) bad_field("tolerance.rho_max", "must be > 0");
    if (cfg.synth.d_k < 1 || cfg.synth.d_v < 1) bad_field("synth", "dimensions must be >= 1");
    if (cfg.synth.vocab < 2) bad_field("synth.vocab", "must be >= 2");
    if (cfg.synth.n_subjects < 1 || cfg.synth.relations_per_subject < 1 ||
        cfg.synth.variants_per_fact < 1)
        bad_field("synth", "counts must be >= 1");
    if (!(cfg.synth.variant_cosine > -1.0 && cfg.synth.variant_cosine <= 1.0))
        bad_field("synth.variant_cosine", "must be in (-1, 1]");
    if (cfg.synth.variant_strength < 0.0) bad_field("synth.variant_strength", "must be >= 0");
}

namespace {

// "a.b.c = value" lines into a nested json document. Values go through the
// JSON scalar parser; anything that fails it is taken as a bare string.
json keyvalue_to_json(const std::string& text, const std::string& origin) {
    json root = json::object();
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");

        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string raw = trim(line.substr(eq + 1));
        if (key.empty() || raw.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");

        json value = json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;

        json* node = &root;
        std::size_t start = 0;
        while (true) {
            const auto dotpos = key.find('.', start);
            const std::string part = key.substr(start, dotpos - start);
            if (part.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad key '" + key +
                                  "'");
            if (dotpos == std::string::npos) {
                (*node)[part] = value;
                break;
            }
            node = &(*node)[part];
            start = dotpos + 1;
        }
    }
    return root;
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) throw ConfigError(origin + ": empty config");
    json j;
    if (text[first] == '{') {
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(origin + ": " + e.what());
        }
    } else {
        j = keyvalue_to_json(text, origin);
    }
    return config_from_json(j);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

} // namespace editlab
