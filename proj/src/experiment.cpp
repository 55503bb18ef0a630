#include "idm/experiment.hpp"

#include <charconv>
#include <filesystem>
#include <sstream>

#include "idm/stats.hpp"
#include "idm/util.hpp"
#include "json.hpp"

namespace idm {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    if (out.size() == 1 && out[0].empty()) out.clear();
    for (const auto& x : out) {
        if (x.empty()) throw ValidationError("empty element in list '" + s + "'");
    }
    return out;
}

double to_double(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ValidationError("expected a number, got '" + s + "'");
    return v;
}

std::uint64_t to_u64(const std::string& s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ValidationError("expected a non-negative integer, got '" + s + "'");
    }
    return v;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F&& f) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += f(v[i]);
    }
    return out;
}

std::string u64s(std::uint64_t v) { return std::to_string(v); }

std::vector<ConfigKey> build_keys() {
    using C = ExperimentConfig;
    std::vector<ConfigKey> k;
    auto add = [&](std::string key, std::string help, std::function<std::string(const C&)> get,
                   std::function<void(C&, const std::string&)> set) {
        k.push_back({std::move(key), std::move(help), std::move(get), std::move(set)});
    };
    auto real = [&](std::string key, std::string help, auto member) {
        add(std::move(key), std::move(help), [member](const C& c) { return format_real(member(c)); },
            [member](C& c, const std::string& v) { member(c) = to_double(v); });
    };
    auto count = [&](std::string key, std::string help, auto member) {
        add(std::move(key), std::move(help), [member](const C& c) { return std::to_string(member(c)); },
            [member](C& c, const std::string& v) { member(c) = static_cast<std::decay_t<decltype(member(c))>>(to_u64(v)); });
    };

    add("corpus", "corpus JSONL path (relative paths resolve against the config file)",
        [](const C& c) { return c.corpus; }, [](C& c, const std::string& v) { c.corpus = v; });
    add("out_dir", "output directory for every artifact", [](const C& c) { return c.out_dir; },
        [](C& c, const std::string& v) { c.out_dir = v; });
    add("split.ratios", "train,val,test passage ratios",
        [](const C& c) { return format_real(c.ratios[0]) + "," + format_real(c.ratios[1]) + "," + format_real(c.ratios[2]); },
        [](C& c, const std::string& v) {
            const auto parts = split_list(v);
            if (parts.size() != 3) throw ValidationError("split.ratios needs three values");
            for (std::size_t i = 0; i < 3; ++i) c.ratios[i] = to_double(parts[i]);
        });
    count("split.seed", "seed of the passage-level split", [](auto& c) -> auto& { return c.split_seed; });
    add("sizes", "training sizes in items; 'full' is the whole training split (single run, first seed)",
        [](const C& c) { return join(c.sizes, [](const SizeSpec& s) { return s.label; }); },
        [](C& c, const std::string& v) {
            c.sizes.clear();
            for (const auto& s : split_list(v)) c.sizes.push_back(parse_size(s));
        });
    add("seeds", "subsample seeds: a list or an inclusive range such as 42..51",
        [](const C& c) { return join(c.seeds, u64s); },
        [](C& c, const std::string& v) { c.seeds = parse_seed_list(v); });
    add("methods", "methods to run: dummy, joint, componentwise, mtl",
        [](const C& c) { return join(c.methods, [](Method m) { return std::string(to_string(m)); }); },
        [](C& c, const std::string& v) {
            c.methods.clear();
            for (const auto& s : split_list(v)) c.methods.push_back(parse_method(s));
        });
    add("baseline", "reference method for paired comparisons", [](const C& c) { return std::string(to_string(c.baseline)); },
        [](C& c, const std::string& v) { c.baseline = parse_method(v); });
    count("vocab.cap", "vocabulary size cap, special tokens included", [](auto& c) -> auto& { return c.vocab_cap; });
    count("assembly.max_len", "maximum tokens per encoder input", [](auto& c) -> auto& { return c.limits.max_len; });
    count("assembly.passage_max_len", "passage budget of the component-wise passage input",
          [](auto& c) -> auto& { return c.limits.passage_max_len; });
    count("encoder.hidden", "model width d", [](auto& c) -> auto& { return c.encoder.hidden; });
    count("encoder.layers", "transformer blocks", [](auto& c) -> auto& { return c.encoder.layers; });
    count("encoder.heads", "attention heads", [](auto& c) -> auto& { return c.encoder.heads; });
    count("encoder.ff", "feed-forward width", [](auto& c) -> auto& { return c.encoder.ff; });
    real("encoder.dropout", "dropout rate", [](auto& c) -> auto& { return c.encoder.dropout; });
    add("componentwise.pooling", "cls or mean", [](const C& c) { return std::string(to_string(c.componentwise.pooling)); },
        [](C& c, const std::string& v) { c.componentwise.pooling = parse_pooling(v); });
    add("componentwise.aggregation", "concat or mean",
        [](const C& c) { return std::string(to_string(c.componentwise.aggregation)); },
        [](C& c, const std::string& v) { c.componentwise.aggregation = parse_aggregation(v); });
    real("train.lr", "AdamW learning rate", [](auto& c) -> auto& { return c.train.lr; });
    real("train.weight_decay", "decoupled weight decay", [](auto& c) -> auto& { return c.train.weight_decay; });
    real("train.beta1", "AdamW beta1", [](auto& c) -> auto& { return c.train.beta1; });
    real("train.beta2", "AdamW beta2", [](auto& c) -> auto& { return c.train.beta2; });
    real("train.eps", "AdamW epsilon", [](auto& c) -> auto& { return c.train.eps; });
    count("train.batch_size", "items per optimiser step", [](auto& c) -> auto& { return c.train.batch_size; });
    count("train.max_epochs", "epoch limit", [](auto& c) -> auto& { return c.train.max_epochs; });
    count("train.patience", "validation evaluations without improvement before stopping",
          [](auto& c) -> auto& { return c.train.patience; });
    count("train.eval_every", "epochs between validation evaluations",
          [](auto& c) -> auto& { return c.train.eval_every; });
    real("train.min_improvement", "RMSE decrease that counts as an improvement",
         [](auto& c) -> auto& { return c.train.min_improvement; });
    add("mtl.lambda", "MCQA loss weight, or 'grid' to use the lambda-grid winner",
        [](const C& c) { return c.lambda_from_grid ? std::string("grid") : format_real(c.lambda); },
        [](C& c, const std::string& v) {
            if (v == "grid") {
                c.lambda_from_grid = true;
            } else {
                c.lambda_from_grid = false;
                c.lambda = to_double(v);
            }
        });
    add("lambda_grid.candidates", "lambda values tried by lambda-grid",
        [](const C& c) { return join(c.lambda_candidates, [](double x) { return format_real(x); }); },
        [](C& c, const std::string& v) {
            c.lambda_candidates.clear();
            for (const auto& s : split_list(v)) c.lambda_candidates.push_back(to_double(s));
        });
    count("lambda_grid.size", "items in the tuning subsample", [](auto& c) -> auto& { return c.lambda_items; });
    count("lambda_grid.seed", "seed of the tuning subsample and its training runs",
          [](auto& c) -> auto& { return c.lambda_seed; });
    count("synth.passages", "synthetic passages", [](auto& c) -> auto& { return c.synth.passages; });
    count("synth.items_per_passage", "items per synthetic passage",
          [](auto& c) -> auto& { return c.synth.items_per_passage; });
    count("synth.filler_vocab", "filler pseudo-words", [](auto& c) -> auto& { return c.synth.filler_vocab; });
    count("synth.cue_pool", "cue pseudo-words", [](auto& c) -> auto& { return c.synth.cue_pool; });
    count("synth.min_len", "shortest passage in words", [](auto& c) -> auto& { return c.synth.min_len; });
    count("synth.max_len", "longest passage in words", [](auto& c) -> auto& { return c.synth.max_len; });
    count("synth.options", "options per item", [](auto& c) -> auto& { return c.synth.options; });
    count("synth.key_tokens", "words per option", [](auto& c) -> auto& { return c.synth.key_tokens; });
    real("synth.alpha", "difficulty weight of standardised passage length", [](auto& c) -> auto& { return c.synth.alpha; });
    real("synth.beta", "difficulty weight of key/distractor overlap", [](auto& c) -> auto& { return c.synth.beta; });
    real("synth.sigma", "label noise standard deviation", [](auto& c) -> auto& { return c.synth.sigma; });
    count("synth.seed", "generator seed", [](auto& c) -> auto& { return c.synth.seed; });
    return k;
}

const ConfigKey& find_key(const std::string& key) {
    for (const auto& k : config_keys()) {
        if (k.key == key) return k;
    }
    throw ValidationError("unknown config key '" + key + "'");
}

void flatten(const nlohmann::json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
        }
        return;
    }
    auto scalar = [](const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number_float()) return format_real(v.get<double>());
        return v.dump();
    };
    if (j.is_array()) {
        std::string s;
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i) s += ',';
            s += scalar(j[i]);
        }
        out.emplace_back(prefix, s);
    } else {
        out.emplace_back(prefix, scalar(j));
    }
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
    sizes = {parse_size("200"), parse_size("800"), parse_size("full")};
    seeds = parse_seed_list("42..51");
    methods = {Method::dummy, Method::joint, Method::componentwise, Method::mtl};
}

std::string ExperimentConfig::resolve(const std::string& path) const {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(base_dir) / path).lexically_normal().string();
}

std::string ExperimentConfig::out_path(const std::string& rel) const {
    const auto root = resolve(out_dir);
    return rel.empty() ? root : (fs::path(root) / rel).string();
}

void ExperimentConfig::validate() const {
    if (sizes.empty()) throw ValidationError("sizes must not be empty");
    if (seeds.empty()) throw ValidationError("seeds must not be empty");
    if (methods.empty()) throw ValidationError("methods must not be empty");
    if (seeds.size() > kMaxExactN) {
        throw ValidationError("at most " + std::to_string(kMaxExactN) + " seeds are supported by the exact test");
    }
    for (std::size_t i = 0; i < methods.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (methods[i] == methods[j]) throw ValidationError("methods lists a method twice");
        }
    }
    if (vocab_cap < static_cast<std::size_t>(kNumSpecials)) throw ValidationError("vocab.cap must be at least 4");
    if (limits.passage_max_len + 1 > limits.max_len) {
        throw ValidationError("assembly.passage_max_len must be below assembly.max_len");
    }
    EncoderConfig e = encoder;
    e.vocab_size = kNumSpecials;
    e.max_len = limits.max_len;
    e.validate();
    train.validate();
    if (!lambda_from_grid) {
        MtlConfig m;
        m.lambda = lambda;
        m.validate();
    }
    if (lambda_candidates.empty()) throw ValidationError("lambda_grid.candidates must not be empty");
    for (double l : lambda_candidates) {
        MtlConfig m;
        m.lambda = l;
        m.validate();
    }
    if (lambda_items == 0) throw ValidationError("lambda_grid.size must be positive");
}

CellConfig ExperimentConfig::cell_config(Method method, const std::string& size_label, std::uint64_t seed) const {
    CellConfig c;
    c.model.method = method;
    c.model.pooling = componentwise.pooling;
    c.model.aggregation = componentwise.aggregation;
    c.encoder = encoder;
    c.train = train;
    c.limits = limits;
    c.mtl.lambda = lambda;
    // Methods sharing a (size, seed) start from the same encoder draw.
    const auto cell_seed = mix_seed(seed, size_label);
    c.encoder.init_seed = mix_seed(cell_seed, "init");
    c.train.run_seed = mix_seed(cell_seed, "run");
    c.mtl.scheduler_seed = mix_seed(cell_seed, "scheduler");
    return c;
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = build_keys();
    return keys;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    const auto dots = s.find("..");
    if (dots != std::string::npos) {
        const auto lo = to_u64(trim(s.substr(0, dots)));
        const auto hi = to_u64(trim(s.substr(dots + 2)));
        if (hi < lo) throw ValidationError("seed range '" + s + "' is empty");
        if (hi - lo >= 1000) throw ValidationError("seed range '" + s + "' is too long");
        std::vector<std::uint64_t> out;
        for (auto x = lo; x <= hi; ++x) out.push_back(x);
        return out;
    }
    std::vector<std::uint64_t> out;
    for (const auto& part : split_list(s)) out.push_back(to_u64(part));
    return out;
}

ExperimentConfig parse_config_text(std::string_view text, const std::string& base_dir) {
    ExperimentConfig c;
    c.base_dir = base_dir;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
        const auto key = trim(body.substr(0, eq));
        const auto value = trim(body.substr(eq + 1));
        try {
            find_key(key).set(c, value);
        } catch (const ParseError&) {
            throw;
        } catch (const ValidationError& e) {
            throw ParseError(lineno, e.what());
        }
    }
    c.validate();
    return c;
}

ExperimentConfig parse_config_json(std::string_view text, const std::string& base_dir) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("config JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config JSON must be an object");
    std::vector<std::pair<std::string, std::string>> pairs;
    flatten(j, "", pairs);
    ExperimentConfig c;
    c.base_dir = base_dir;
    for (const auto& [key, value] : pairs) find_key(key).set(c, value);
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    const auto text = read_file(path);
    auto dir = fs::path(path).parent_path().string();
    if (dir.empty()) dir = ".";
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return parse_config_json(text, dir);
    return parse_config_text(text, dir);
}

std::string defaults_text() {
    const ExperimentConfig c;
    std::string out;
    for (const auto& k : config_keys()) {
        out += "# " + k.help + "\n" + k.key + " = " + k.get(c) + "\n";
    }
    return out;
}

}  // namespace idm
