#include "idm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "idm/checkpoint.hpp"
#include "idm/stats.hpp"
#include "idm/util.hpp"
#include "json.hpp"

namespace idm {

namespace fs = std::filesystem;

namespace {

constexpr std::array<Metric, 3> kMetrics = {Metric::rmse, Metric::r2, Metric::spearman};

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

nlohmann::json read_json(const std::string& path, const std::string& producer) {
    if (!fs::exists(path)) {
        throw ValidationError("missing " + path + ": run `idmlab " + producer + "` first");
    }
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("cannot parse " + path + ": " + e.what());
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// Header-keyed rows of a simple comma-separated file.
std::vector<std::map<std::string, std::string>> read_csv(const std::string& path, const std::string& producer) {
    if (!fs::exists(path)) {
        throw ValidationError("missing " + path + ": run `idmlab " + producer + "` first");
    }
    std::istringstream in(read_file(path));
    std::string line;
    std::vector<std::string> header;
    std::vector<std::map<std::string, std::string>> rows;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (header.empty()) {
            header = std::move(cells);
            continue;
        }
        if (cells.size() != header.size()) throw ParseError(lineno, path + ": wrong number of columns");
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
        rows.push_back(std::move(row));
    }
    return rows;
}

double cell_value(const std::string& s) {
    if (s == "NA") return std::nan("");
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError("bad numeric cell '" + s + "'");
}

std::string real_or_na(double x) { return std::isnan(x) ? std::string("NA") : format_real(x); }

std::string ids_hash(const std::vector<std::string>& ids) {
    std::string s;
    for (const auto& id : ids) s += id + "\n";
    return fnv1a_hex(s);
}

// Corpus, split plan, subsample grid and vocabulary, checked against each other.
struct Context {
    Corpus corpus;
    SplitPlan plan;
    SubsampleGrid grid;
    Vocab vocab;
    std::unique_ptr<CorpusIndex> index;
};

std::unique_ptr<Context> load_context(const ExperimentConfig& config) {
    auto ctx = std::make_unique<Context>();
    const auto plan_j = read_json(config.out_path("plan.json"), "prepare");
    const auto grid_j = read_json(config.out_path("grid.json"), "prepare");
    const auto vocab_j = read_json(config.out_path("vocab.json"), "prepare");
    ctx->corpus = load_corpus(config.corpus_path());
    ctx->plan = plan_from_json(plan_j);
    ctx->grid = grid_from_json(grid_j);
    ctx->vocab = Vocab::from_json(vocab_j);
    const auto hash = corpus_hash(ctx->corpus);
    if (ctx->plan.corpus_hash != hash || ctx->grid.corpus_hash != hash) {
        throw ValidationError("corpus " + config.corpus + " does not match the prepared split (hash " + hash +
                              " vs " + ctx->plan.corpus_hash + "): rerun `idmlab prepare`");
    }
    if (ctx->vocab.source_hash() != ids_hash(ctx->plan.train_ids)) {
        throw ValidationError("vocab.json was not built from this training split: rerun `idmlab prepare`");
    }
    std::vector<std::string> want, have;
    for (const auto& s : config.sizes) want.push_back(s.label);
    for (const auto& s : ctx->grid.sizes) have.push_back(s.label);
    if (want != have || config.seeds != ctx->grid.seeds) {
        throw ValidationError("grid.json was prepared for other sizes or seeds: rerun `idmlab prepare`");
    }
    ctx->index = std::make_unique<CorpusIndex>(ctx->corpus);
    return ctx;
}

std::string cell_dir(const ExperimentConfig& config, const CellId& cell) {
    return config.out_path("cells/" + cell.name());
}

bool is_trained(const ExperimentConfig& config, const CellId& cell) {
    return fs::exists(cell_dir(config, cell) + "/meta.json");
}

bool is_evaluated(const ExperimentConfig& config, const CellId& cell) {
    return fs::exists(cell_dir(config, cell) + "/evaluation.json");
}

std::vector<double> targets_of(const std::vector<const Item*>& items) {
    std::vector<double> t;
    t.reserve(items.size());
    for (const Item* i : items) t.push_back(i->difficulty);
    return t;
}

void write_results(const ExperimentConfig& config, std::ostream& log) {
    std::string csv = "method,n_label,seed,rmse,r2,spearman\n";
    std::size_t rows = 0;
    for (const auto& cell : plan_cells(config)) {
        if (!is_evaluated(config, cell)) continue;
        const auto j = read_json(cell_dir(config, cell) + "/evaluation.json", "evaluate");
        const auto sp = j.at("spearman");
        csv += std::string(to_string(cell.method)) + "," + cell.size + "," + std::to_string(cell.seed) + "," +
               format_real(j.at("rmse").get<double>()) + "," + format_real(j.at("r2").get<double>()) + "," +
               (sp.is_null() ? std::string("NA") : format_real(sp.get<double>())) + "\n";
        ++rows;
    }
    write_file(config.out_path("results.csv"), csv);
    log << "results.csv: " << rows << " evaluated cells\n";
}

struct ResultRow {
    Method method;
    std::string size;
    std::uint64_t seed;
    std::array<double, 3> metric;  // rmse, r2, spearman (NaN when undefined)
};

std::vector<ResultRow> read_results(const ExperimentConfig& config) {
    std::vector<ResultRow> out;
    for (const auto& r : read_csv(config.out_path("results.csv"), "evaluate")) {
        ResultRow row;
        row.method = parse_method(r.at("method"));
        row.size = r.at("n_label");
        row.seed = std::stoull(r.at("seed"));
        row.metric = {cell_value(r.at("rmse")), cell_value(r.at("r2")), cell_value(r.at("spearman"))};
        out.push_back(row);
    }
    return out;
}

std::map<std::uint64_t, double> metric_by_seed(const std::vector<ResultRow>& rows, Method method,
                                               const std::string& size, std::size_t metric) {
    std::map<std::uint64_t, double> out;
    for (const auto& r : rows) {
        if (r.method == method && r.size == size) out[r.seed] = r.metric[metric];
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string CellId::name() const { return std::string(to_string(method)) + "_" + size + "_" + std::to_string(seed); }

std::string CellId::selector() const {
    return std::string(to_string(method)) + ":" + size + ":" + std::to_string(seed);
}

CellId CellId::parse(const std::string& selector) {
    const auto a = selector.find(':');
    const auto b = a == std::string::npos ? a : selector.find(':', a + 1);
    if (b == std::string::npos) {
        throw ValidationError("cell selector '" + selector + "' must look like method:size:seed");
    }
    CellId c;
    c.method = parse_method(selector.substr(0, a));
    c.size = parse_size(selector.substr(a + 1, b - a - 1)).label;
    const auto seeds = parse_seed_list(selector.substr(b + 1));
    if (seeds.size() != 1) throw ValidationError("cell selector '" + selector + "' names more than one seed");
    c.seed = seeds[0];
    return c;
}

std::vector<CellId> plan_cells(const ExperimentConfig& config) {
    std::vector<CellId> cells;
    for (Method m : config.methods) {
        for (const auto& s : config.sizes) {
            for (std::size_t k = 0; k < config.seeds.size(); ++k) {
                if (s.full && k > 0) break;
                cells.push_back({m, s.label, config.seeds[k]});
            }
        }
    }
    return cells;
}

std::string format_p(double p) {
    std::string s = format_fixed(p, 3);
    if (s.rfind("0.", 0) == 0) s.erase(0, 1);
    return s;
}

std::string format_mean_sd(const std::vector<double>& values, int decimals) {
    std::vector<double> v;
    for (double x : values) {
        if (!std::isnan(x)) v.push_back(x);
    }
    if (v.empty()) return "n/a";
    if (values.size() == 1) return format_fixed(v[0], decimals);
    return format_fixed(mean(v), decimals) + " ± " + format_fixed(sample_sd(v), decimals);
}

double resolve_lambda(const ExperimentConfig& config) {
    if (!config.lambda_from_grid) return config.lambda;
    const auto path = config.out_path("lambda_grid.json");
    if (!fs::exists(path)) {
        throw ValidationError("mtl.lambda = grid but " + path +
                              " is missing: run `idmlab lambda-grid` first or set mtl.lambda to a number");
    }
    const auto j = read_json(path, "lambda-grid");
    const auto plan = read_json(config.out_path("plan.json"), "prepare");
    if (j.at("corpus_hash") != plan.at("corpus_hash")) {
        throw ValidationError(path + " belongs to another corpus: rerun `idmlab lambda-grid`");
    }
    return j.at("winner").get<double>();
}

void cmd_gen_synth(const ExperimentConfig& config, std::ostream& log) {
    const auto synth = generate(config.synth);
    const auto path = config.corpus_path();
    save_corpus(synth.corpus, path);
    auto dir = fs::path(path).parent_path();
    write_file((dir / "truth.json").string(), dump(truth_to_json(config.synth, synth)));
    log << "wrote " << synth.corpus.size() << " items to " << path << "\n";
}

void cmd_prepare(const ExperimentConfig& config, std::ostream& log) {
    const auto corpus = load_corpus(config.corpus_path());
    const auto plan = partition(corpus, config.ratios, config.split_seed);
    const auto grid = subsample_grid(corpus, plan, config.sizes, config.seeds);
    CorpusIndex index(corpus);
    const auto train_items = index.resolve(plan.train_ids);
    auto vocab = Vocab::build(std::span<const Item* const>(train_items), config.vocab_cap);
    vocab.set_source_hash(ids_hash(plan.train_ids));

    write_file(config.out_path("plan.json"), dump(plan_to_json(plan)));
    write_file(config.out_path("grid.json"), dump(grid_to_json(grid)));
    write_file(config.out_path("vocab.json"), vocab.to_json().dump(2) + "\n");
    for (const auto& w : plan.warnings) log << "warning: " << w << "\n";
    log << "split: " << plan.train_ids.size() << " train / " << plan.val_ids.size() << " val / "
        << plan.test_ids.size() << " test items; vocabulary " << vocab.size() << " tokens\n";
}

void cmd_train(const ExperimentConfig& config, const std::vector<CellId>& cells, bool force, std::ostream& log) {
    const auto ctx = load_context(config);
    const auto val_items = ctx->index->resolve(ctx->plan.val_ids);
    std::optional<double> lambda;
    for (const auto& cell : cells) {
        const auto dir = cell_dir(config, cell);
        if (is_trained(config, cell) && !force) {
            log << cell.selector() << ": already trained, skipping\n";
            continue;
        }
        const auto& ids = ctx->grid.at(cell.size, cell.seed);
        const auto train_items = ctx->index->resolve(ids);
        nlohmann::ordered_json meta;
        meta["cell"] = cell.selector();
        meta["method"] = to_string(cell.method);
        meta["size"] = cell.size;
        meta["seed"] = cell.seed;
        meta["n_train"] = train_items.size();
        meta["corpus_hash"] = ctx->plan.corpus_hash;
        meta["subsample_hash"] = ids_hash(ids);

        if (cell.method == Method::dummy) {
            meta["train_mean"] = mean(targets_of(train_items));
        } else {
            auto cc = config.cell_config(cell.method, cell.size, cell.seed);
            if (cell.method == Method::mtl) {
                if (!lambda) lambda = resolve_lambda(config);
                cc.mtl.lambda = *lambda;
            }
            const auto run = train_cell(cc, train_items, val_items, ctx->vocab);
            CheckpointHeader header;
            header.encoder = run.config.encoder;
            header.model = run.config.model;
            header.step = run.best_step;
            header.val_rmse = run.best_val_rmse;
            header.extra = {{"cell", cell.selector()}};
            save_checkpoint(dir + "/checkpoint.bin", run.params, header);
            write_file(dir + "/history.csv", history_to_csv(run.history));
            meta["encoder"] = run.config.encoder.to_json();
            meta["train"] = run.config.train.to_json();
            meta["model"] = {{"pooling", to_string(run.config.model.pooling)},
                             {"aggregation", to_string(run.config.model.aggregation)}};
            if (cell.method == Method::mtl) {
                meta["mtl"] = {{"lambda", run.config.mtl.lambda}, {"scheduler_seed", run.config.mtl.scheduler_seed}};
            }
            meta["limits"] = {{"max_len", run.config.limits.max_len},
                              {"passage_max_len", run.config.limits.passage_max_len}};
            meta["steps"] = run.steps;
            meta["regression_steps"] = run.regression_steps;
            meta["mcqa_steps"] = run.mcqa_steps;
            meta["best_epoch"] = run.best_epoch;
            meta["best_step"] = run.best_step;
            meta["best_val_rmse"] = run.best_val_rmse;
            meta["checkpoint_hash"] = file_hash(dir + "/checkpoint.bin");
        }
        // meta.json is written last and marks the cell as trained
        write_file(dir + "/meta.json", dump(meta));
        log << cell.selector() << ": trained";
        if (meta.contains("best_val_rmse")) log << ", best val RMSE " << format_fixed(meta["best_val_rmse"], 4);
        log << "\n";
    }
}

void cmd_evaluate(const ExperimentConfig& config, const std::vector<CellId>& cells, bool only_pending, bool force,
                  std::ostream& log) {
    const auto ctx = load_context(config);
    // Check every selection first so a refusal leaves nothing half-done.
    std::vector<CellId> todo;
    for (const auto& cell : cells) {
        if (!is_trained(config, cell)) {
            if (only_pending) continue;
            throw ValidationError(cell.selector() + " is not trained: run `idmlab train --cell " + cell.selector() +
                                  "` first");
        }
        if (is_evaluated(config, cell) && !force) {
            if (only_pending) continue;
            throw ValidationError(cell.selector() +
                                  " was already evaluated on the test split; pass --force to consult it again");
        }
        todo.push_back(cell);
    }
    const auto test_items = ctx->index->resolve(ctx->plan.test_ids);
    const auto targets = targets_of(test_items);
    for (const auto& cell : todo) {
        const auto dir = cell_dir(config, cell);
        const auto meta = read_json(dir + "/meta.json", "train");
        if (meta.at("corpus_hash").get<std::string>() != ctx->plan.corpus_hash) {
            throw ValidationError(cell.selector() + " was trained on another corpus: retrain it");
        }
        std::vector<double> preds;
        if (cell.method == Method::dummy) {
            preds.assign(test_items.size(), meta.at("train_mean").get<double>());
        } else {
            CheckpointHeader header;
            const auto params = load_checkpoint(dir + "/checkpoint.bin", &header);
            CellConfig cc;
            cc.model = header.model;
            cc.encoder = header.encoder;
            cc.limits.max_len = meta.at("limits").at("max_len").get<std::size_t>();
            cc.limits.passage_max_len = meta.at("limits").at("passage_max_len").get<std::size_t>();
            preds = predict_items(params, cc, test_items, ctx->vocab);
        }
        std::string csv = "item_id,target,prediction\n";
        for (std::size_t i = 0; i < preds.size(); ++i) {
            csv += test_items[i]->item_id + "," + format_real(targets[i]) + "," + format_real(preds[i]) + "\n";
        }
        write_file(dir + "/predictions.csv", csv);
        nlohmann::ordered_json ev;
        ev["cell"] = cell.selector();
        ev["n_test"] = preds.size();
        ev["rmse"] = rmse(preds, targets);
        ev["r2"] = r2(preds, targets);
        const auto sp = spearman(preds, targets);
        ev["spearman"] = sp ? nlohmann::ordered_json(*sp) : nlohmann::ordered_json(nullptr);
        write_file(dir + "/evaluation.json", dump(ev));
        log << cell.selector() << ": test RMSE " << format_fixed(ev["rmse"].get<double>(), 4) << "\n";
    }
    write_results(config, log);
}

void cmd_compare(const ExperimentConfig& config, std::ostream& log) {
    const auto rows = read_results(config);
    std::string csv = "method,n_label,metric,hl,ci_lo,ci_hi,V,p,favourable,n_pairs\n";
    std::size_t written = 0;
    for (Method m : config.methods) {
        if (m == config.baseline) continue;
        for (const auto& size : config.sizes) {
            for (std::size_t k = 0; k < kMetrics.size(); ++k) {
                const auto a = metric_by_seed(rows, m, size.label, k);
                const auto b = metric_by_seed(rows, config.baseline, size.label, k);
                if (a.size() < 2 && b.size() < 2) continue;
                if (a.size() != b.size()) {
                    throw ValidationError(std::string("compare: ") + to_string(m) + " and " +
                                          to_string(config.baseline) + " have different evaluated seeds at size " +
                                          size.label + ": evaluate the missing cells");
                }
                std::size_t defined = 0;
                for (const auto& [seed, v] : a) {
                    if (!std::isnan(v) && b.count(seed) && !std::isnan(b.at(seed))) ++defined;
                }
                if (defined == 0) {
                    log << "note: " << to_string(m) << " at " << size.label << " has no defined "
                        << to_string(kMetrics[k]) << "; skipped\n";
                    continue;
                }
                const auto pc = compare(a, b, kMetrics[k]);
                csv += std::string(to_string(m)) + "," + size.label + "," + to_string(kMetrics[k]) + "," +
                       format_real(pc.hl.estimate) + "," + format_real(pc.hl.lo) + "," + format_real(pc.hl.hi) + "," +
                       format_real(pc.test.V) + "," + format_real(pc.test.p) + "," + std::to_string(pc.favourable) +
                       "," + std::to_string(pc.differences.size()) + "\n";
                if (pc.test.degenerate) {
                    log << "warning: " << to_string(m) << " " << size.label << " " << to_string(kMetrics[k])
                        << ": every paired difference is zero, p set to 1\n";
                }
                ++written;
            }
        }
    }
    write_file(config.out_path("comparisons.csv"), csv);
    log << "comparisons.csv: " << written << " rows\n";
}

void cmd_report(const ExperimentConfig& config, std::ostream& log) {
    const auto rows = read_results(config);
    const auto comps = read_csv(config.out_path("comparisons.csv"), "compare");
    const char* metric_titles[] = {"RMSE", "R²", "Spearman ρ"};

    std::ostringstream md;
    md << "# Difficulty prediction results\n\n";
    md << "Test-set metrics per training size. Partial sizes show mean ± SD across seeds; "
          "the full-size row is a single run.\n\n";
    md << "| n | method | seeds | RMSE | R² | Spearman ρ |\n|---|---|---|---|---|---|\n";
    for (const auto& size : config.sizes) {
        for (Method m : config.methods) {
            std::array<std::vector<double>, 3> vals;
            for (const auto& r : rows) {
                if (r.method != m || r.size != size.label) continue;
                for (std::size_t k = 0; k < 3; ++k) vals[k].push_back(r.metric[k]);
            }
            if (vals[0].empty()) continue;
            md << "| " << size.label << " | " << to_string(m) << " | " << vals[0].size() << " | "
               << format_mean_sd(vals[0]) << " | " << format_mean_sd(vals[1]) << " | " << format_mean_sd(vals[2])
               << " |\n";
        }
    }

    md << "\n## Paired comparisons against " << to_string(config.baseline) << "\n\n";
    md << "Hodges–Lehmann estimate of the per-seed difference (method − " << to_string(config.baseline)
       << ") with its 95% interval, exact two-sided Wilcoxon signed-rank test, and the number of seeds in "
          "which the method does better (lower RMSE, higher R² and ρ).\n\n";
    md << "| method | n | metric | HL | 95% CI | V | p | favourable |\n|---|---|---|---|---|---|---|---|\n";
    for (const auto& c : comps) {
        const auto metric = parse_metric(c.at("metric"));
        md << "| " << c.at("method") << " | " << c.at("n_label") << " | "
           << metric_titles[static_cast<std::size_t>(metric)] << " | " << format_fixed(cell_value(c.at("hl")), 3)
           << " | [" << format_fixed(cell_value(c.at("ci_lo")), 3) << ", "
           << format_fixed(cell_value(c.at("ci_hi")), 3) << "] | " << c.at("V") << " | "
           << format_p(cell_value(c.at("p"))) << " | " << c.at("favourable") << "/" << c.at("n_pairs") << " |\n";
    }
    write_file(config.out_path("report.md"), md.str());

    for (std::size_t k = 0; k < kMetrics.size(); ++k) {
        std::string csv = "method,n_label,seed,baseline,value,difference\n";
        for (Method m : config.methods) {
            if (m == config.baseline) continue;
            for (const auto& size : config.sizes) {
                const auto a = metric_by_seed(rows, m, size.label, k);
                const auto b = metric_by_seed(rows, config.baseline, size.label, k);
                for (const auto& [seed, v] : a) {
                    const auto it = b.find(seed);
                    if (it == b.end()) continue;
                    csv += std::string(to_string(m)) + "," + size.label + "," + std::to_string(seed) + "," +
                           real_or_na(it->second) + "," + real_or_na(v) + "," + real_or_na(v - it->second) + "\n";
                }
            }
        }
        write_file(config.out_path(std::string("paired_") + to_string(kMetrics[k]) + ".csv"), csv);
    }
    log << "wrote report.md and paired_{rmse,r2,spearman}.csv\n";
}

void cmd_lambda_grid(const ExperimentConfig& config, std::ostream& log) {
    const auto ctx = load_context(config);
    // Tuning passages come from training passages outside every partial-size subsample.
    std::set<std::string> used;
    for (const auto& [key, ids] : ctx->grid.cells) {
        bool full = false;
        for (const auto& s : ctx->grid.sizes) {
            if (s.label == key.first) full = s.full;
        }
        if (full) continue;
        for (const auto& id : ids) used.insert(ctx->index->at(id).passage_id);
    }
    std::map<std::string, std::vector<std::string>> by_passage;
    for (const auto& id : ctx->plan.train_ids) {
        const auto& p = ctx->index->at(id).passage_id;
        if (!used.count(p)) by_passage[p].push_back(id);
    }
    if (by_passage.empty()) {
        throw ValidationError("no training passages remain outside the evaluation subsamples; "
                              "lower the sizes or add data");
    }
    std::vector<std::string> passages;
    for (const auto& [p, ids] : by_passage) passages.push_back(p);
    Rng rng(mix_seed(config.lambda_seed, "lambda-grid"));
    rng.shuffle(passages);
    std::vector<std::string> tuning_ids;
    for (const auto& p : passages) {
        if (tuning_ids.size() >= config.lambda_items) break;
        for (const auto& id : by_passage[p]) tuning_ids.push_back(id);
    }
    std::vector<std::string> warnings;
    if (tuning_ids.size() < config.lambda_items) {
        warnings.push_back("only " + std::to_string(tuning_ids.size()) + " training items lie outside the evaluation "
                           "subsamples; tuning on fewer than the requested " + std::to_string(config.lambda_items));
        log << "warning: " << warnings.back() << "\n";
    }
    const auto tuning = ctx->index->resolve(tuning_ids);
    const auto val = ctx->index->resolve(ctx->plan.val_ids);
    const auto base = config.cell_config(Method::mtl, "lambda-grid", config.lambda_seed);
    const auto result = lambda_grid(config.lambda_candidates, base, tuning, val, ctx->vocab);

    nlohmann::ordered_json j;
    j["corpus_hash"] = ctx->plan.corpus_hash;
    j["candidates"] = config.lambda_candidates;
    j["tuning_items"] = tuning_ids.size();
    j["tuning_hash"] = ids_hash(tuning_ids);
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    std::string csv = "lambda,val_rmse,error\n";
    for (const auto& r : result.rows) {
        nlohmann::ordered_json row = {{"lambda", r.lambda}};
        row["val_rmse"] = r.error.empty() ? nlohmann::ordered_json(r.val_rmse) : nlohmann::ordered_json(nullptr);
        row["error"] = r.error;
        table.push_back(row);
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        csv += format_real(r.lambda) + "," + (r.error.empty() ? format_real(r.val_rmse) : "NA") + "," + err + "\n";
        log << "lambda " << format_real(r.lambda) << ": "
            << (r.error.empty() ? "val RMSE " + format_fixed(r.val_rmse, 4) : "failed: " + r.error) << "\n";
    }
    j["rows"] = table;
    j["winner"] = result.winner;
    j["warnings"] = warnings;
    write_file(config.out_path("lambda_grid.json"), dump(j));
    write_file(config.out_path("lambda_grid.csv"), csv);
    log << "lambda winner: " << format_real(result.winner) << "\n";
}

}  // namespace idm
