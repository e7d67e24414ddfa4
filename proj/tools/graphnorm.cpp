#include <CLI11.hpp>
#include <json.hpp>

#include <graphnorm/dataset.hpp>
#include <graphnorm/evaluation.hpp>
#include <graphnorm/svg.hpp>
#include <graphnorm/topology.hpp>
#include <graphnorm/trainer.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace graphnorm;

namespace {

constexpr const char* kVersion = "graphnorm 0.1.0";

// ---------------------------------------------------------------------------
// Config file: one flat JSON object covering training, synthesis, and
// evaluation settings. Unknown keys are rejected by name. Precedence is
// flag > file > default; the GRAPHNORM_SEED environment variable fills in
// when neither flag nor file provides a seed.
// ---------------------------------------------------------------------------

struct RunConfig {
    TrainConfig train;
    SyntheticSpec synth;
    int folds = 5;
    int jobs = 1;
    std::vector<std::size_t> k_values = {5, 10, 15, 20, 25};
    std::vector<std::string> measures = {"strength", "pagerank", "effective_size",
                                         "clustering"};
    bool seed_from_file = false;
};

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<std::size_t> parse_k_list(const std::string& s) {
    std::vector<std::size_t> out;
    for (const std::string& item : split_csv_list(s)) {
        try {
            out.push_back(static_cast<std::size_t>(std::stoull(item)));
        } catch (...) {
            throw ValidationError("bad k value '" + item + "'");
        }
    }
    if (out.empty()) throw ValidationError("empty k list");
    return out;
}

RunConfig load_run_config(const std::optional<std::string>& path) {
    RunConfig cfg;
    if (!path) return cfg;
    std::ifstream in(*path);
    if (!in) throw ValidationError("missing file: " + *path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed config " + *path + ": " + e.what());
    }
    if (!j.is_object()) throw ValidationError("config must be a JSON object");

    for (const auto& [key, value] : j.items()) {
        if (key == "lr") cfg.train.lr = value.get<double>();
        else if (key == "adam_beta1") cfg.train.adam_beta1 = value.get<double>();
        else if (key == "adam_beta2") cfg.train.adam_beta2 = value.get<double>();
        else if (key == "max_epochs") cfg.train.max_epochs = value.get<int>();
        else if (key == "patience") cfg.train.patience = value.get<int>();
        else if (key == "subset_size") cfg.train.subset_size = value.get<std::size_t>();
        else if (key == "beta") cfg.train.beta = value.get<double>();
        else if (key == "dims") cfg.train.dims = value.get<std::array<std::size_t, 3>>();
        else if (key == "hidden") cfg.train.hidden = value.get<std::size_t>();
        else if (key == "readout")
            cfg.train.readout = readout_from_name(value.get<std::string>());
        else if (key == "seed") {
            cfg.train.seed = value.get<std::uint64_t>();
            cfg.synth.seed = cfg.train.seed;
            cfg.seed_from_file = true;
        } else if (key == "n_subjects") cfg.synth.n_subjects = value.get<std::size_t>();
        else if (key == "n_r") cfg.synth.n_r = value.get<std::size_t>();
        else if (key == "n_v") cfg.synth.n_v = value.get<std::size_t>();
        else if (key == "view_means") cfg.synth.view_means = value.get<std::vector<double>>();
        else if (key == "view_max") cfg.synth.view_max = value.get<std::vector<double>>();
        else if (key == "noise_scale") cfg.synth.noise_scale = value.get<double>();
        else if (key == "folds") cfg.folds = value.get<int>();
        else if (key == "jobs") cfg.jobs = value.get<int>();
        else if (key == "k_values") cfg.k_values = value.get<std::vector<std::size_t>>();
        else if (key == "measures") cfg.measures = value.get<std::vector<std::string>>();
        else throw ValidationError("unknown config key '" + key + "'");
    }
    return cfg;
}

void apply_seed_policy(RunConfig& cfg, bool seed_flag_given, std::uint64_t flag_seed) {
    if (seed_flag_given) {
        cfg.train.seed = flag_seed;
        cfg.synth.seed = flag_seed;
        return;
    }
    if (cfg.seed_from_file) return;
    if (const char* env = std::getenv("GRAPHNORM_SEED")) {
        try {
            cfg.train.seed = std::stoull(env);
            cfg.synth.seed = cfg.train.seed;
        } catch (...) {
            throw ValidationError("GRAPHNORM_SEED is not an integer: '" + std::string(env) +
                                  "'");
        }
    }
}

nlohmann::ordered_json config_echo(const RunConfig& cfg, int folds) {
    nlohmann::ordered_json j;
    j["lr"] = cfg.train.lr;
    j["adam_beta1"] = cfg.train.adam_beta1;
    j["adam_beta2"] = cfg.train.adam_beta2;
    j["max_epochs"] = cfg.train.max_epochs;
    j["patience"] = cfg.train.patience;
    j["subset_size"] = cfg.train.subset_size;
    j["beta"] = cfg.train.beta;
    j["dims"] = cfg.train.dims;
    j["hidden"] = cfg.train.hidden;
    j["readout"] = readout_name(cfg.train.readout);
    j["seed"] = cfg.train.seed;
    j["folds"] = folds;
    return j;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void write_training_log(const TrainResult& r, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,train_loss,train_centeredness,train_kl,test_loss,elapsed_ms\n";
    for (const EpochRecord& e : r.history)
        out << e.epoch << ',' << format_double(e.train_loss) << ','
            << format_double(e.train_centeredness) << ',' << format_double(e.train_kl)
            << ',' << format_double(e.test_loss) << ',' << e.elapsed_ms << '\n';
}

int cmd_train(const std::string& data_dir, const std::string& out_dir, RunConfig cfg) {
    Population pop = load_dataset(data_dir);
    fs::create_directories(out_dir);

    CvResult cv = run_cv(pop, cfg.folds, cfg.train, cfg.jobs);

    {
        std::ofstream out(fs::path(out_dir) / "run.json");
        nlohmann::ordered_json j;
        j["command"] = "train";
        j["data"] = data_dir;
        j["config"] = config_echo(cfg, cfg.folds);
        out << j.dump(2) << '\n';
    }

    std::ofstream summary(fs::path(out_dir) / "cv_summary.csv");
    summary << "fold,stopped_epoch,best_epoch,best_test_loss,refined_test_centeredness\n";
    for (const FoldOutcome& f : cv.folds) {
        const fs::path fold_dir = fs::path(out_dir) / ("fold_" + std::to_string(f.fold));
        fs::create_directories(fold_dir);
        save_model(f.result.model, fold_dir / "model.json");
        write_matrix_csv(f.result.refined_template.matrix, fold_dir / "template.csv");
        write_training_log(f.result, fold_dir / "training_log.csv");
        summary << f.fold << ',' << f.result.stopped_epoch << ',' << f.result.best_epoch
                << ',' << format_double(f.result.best_test_loss) << ','
                << format_double(f.refined_test_centeredness) << '\n';
    }
    summary << "mean,,,," << format_double(cv.mean_centeredness) << '\n';

    std::cout << "trained " << cfg.folds << " folds; mean held-out centeredness "
              << format_double(cv.mean_centeredness) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct MethodTemplates {
    std::string name;
    std::vector<Template> per_fold;
};

int cmd_evaluate(const std::string& data_dir, const std::string& templates_dir,
                 const std::string& out_dir, RunConfig cfg, bool folds_flag,
                 bool seed_flag) {
    Population pop = load_dataset(data_dir);

    // fold layout defaults come from the training run's echo
    const fs::path run_json = fs::path(templates_dir) / "run.json";
    if (fs::exists(run_json)) {
        std::ifstream in(run_json);
        nlohmann::json j;
        in >> j;
        if (!folds_flag && j.contains("config") && j["config"].contains("folds"))
            cfg.folds = j["config"]["folds"].get<int>();
        if (!seed_flag && j.contains("config") && j["config"].contains("seed"))
            cfg.train.seed = j["config"]["seed"].get<std::uint64_t>();
    }

    std::vector<TopologyMeasure> measures;
    for (const std::string& name : cfg.measures)
        measures.push_back(topology_measure_from_name(name));

    FoldAssignment fa = split_folds(pop, cfg.folds, cfg.train.seed);
    fs::create_directories(out_dir);

    std::vector<CenterednessRow> center_rows;
    std::vector<TopologyRow> topo_rows;
    std::map<std::string, std::vector<double>> per_fold_overall;

    for (int f = 0; f < cfg.folds; ++f) {
        std::vector<const MultiViewSample*> train, test;
        for (std::size_t i : fa.train_indices(f)) train.push_back(&pop.samples[i]);
        for (std::size_t i : fa.test_indices(f)) test.push_back(&pop.samples[i]);

        const fs::path tpath =
            fs::path(templates_dir) / ("fold_" + std::to_string(f)) / "template.csv";
        Tensor learned = read_matrix_csv(tpath);
        if (learned.rows() != pop.n_r || learned.cols() != pop.n_r)
            throw ValidationError("template " + tpath.string() + " is " +
                                  shape_str(learned) + " but the dataset has n_r = " +
                                  std::to_string(pop.n_r));

        std::vector<std::pair<std::string, Tensor>> methods;
        methods.emplace_back("learned", learned);
        methods.emplace_back("baseline_mean",
                             baseline_template(train, BaselineMethod::Mean).matrix);
        methods.emplace_back("baseline_median",
                             baseline_template(train, BaselineMethod::Median).matrix);

        for (const auto& [name, templ] : methods) {
            CenterednessRow row{f, name, centeredness_score(templ, test)};
            per_fold_overall[name].push_back(row.score.overall);
            center_rows.push_back(std::move(row));
            for (TopologyMeasure m : measures)
                topo_rows.push_back(
                    {f, name, topology_measure_name(m), topology_divergence(templ, test, m)});
        }
    }

    write_centeredness_csv(center_rows, pop.view_names, fs::path(out_dir) / "centeredness.csv");
    write_topology_csv(topo_rows, fs::path(out_dir) / "topology.csv");

    // per-fold centeredness bars plus the cross-fold mean (rightmost group)
    {
        std::vector<std::string> groups;
        for (int f = 0; f < cfg.folds; ++f) groups.push_back("fold " + std::to_string(f));
        groups.push_back("Mean");
        std::vector<svg::Series> series;
        for (const auto& [name, values] : per_fold_overall) {
            svg::Series s;
            s.name = name;
            s.values = values;
            double mean = 0.0;
            for (double v : values) mean += v;
            s.values.push_back(mean / values.size());
            series.push_back(std::move(s));
        }
        svg::bar_chart(groups, series, "Centeredness (mean Frobenius distance to test views)",
                       fs::path(out_dir) / "centeredness.svg");
    }

    // population-mean profiles per measure: ground truth vs each method
    for (TopologyMeasure m : measures) {
        std::vector<const MultiViewSample*> everyone;
        for (const auto& s : pop.samples) everyone.push_back(&s);
        svg::Series truth;
        truth.name = "ground truth";
        truth.values.assign(pop.n_r, 0.0);
        std::size_t count = 0;
        for (const auto* s : everyone)
            for (const Tensor& view : s->views) {
                TopologyProfile p = profile(view, m);
                for (std::size_t i = 0; i < pop.n_r; ++i) truth.values[i] += p.p[i];
                ++count;
            }
        for (double& v : truth.values) v /= static_cast<double>(count);

        std::vector<svg::Series> series = {truth};
        for (const char* name : {"learned", "baseline_mean", "baseline_median"}) {
            svg::Series s;
            s.name = name;
            s.values.assign(pop.n_r, 0.0);
            series.push_back(std::move(s));
        }
        for (int f = 0; f < cfg.folds; ++f) {
            std::vector<const MultiViewSample*> train;
            for (std::size_t i : fa.train_indices(f)) train.push_back(&pop.samples[i]);
            const Tensor learned = read_matrix_csv(
                fs::path(templates_dir) / ("fold_" + std::to_string(f)) / "template.csv");
            const Tensor mean_b = baseline_template(train, BaselineMethod::Mean).matrix;
            const Tensor median_b = baseline_template(train, BaselineMethod::Median).matrix;
            const Tensor* mats[3] = {&learned, &mean_b, &median_b};
            for (int mi = 0; mi < 3; ++mi) {
                TopologyProfile p = profile(*mats[mi], m);
                for (std::size_t i = 0; i < pop.n_r; ++i)
                    series[mi + 1].values[i] += p.p[i] / cfg.folds;
            }
        }
        svg::line_plot(series, "Topology profile: " + topology_measure_name(m),
                       "node probability",
                       fs::path(out_dir) / ("topology_" + topology_measure_name(m) + ".svg"));
    }

    if (cfg.folds >= 2) {
        PairedTTest tt =
            paired_t_test(per_fold_overall["learned"], per_fold_overall["baseline_mean"]);
        std::cout << "learned vs baseline_mean centeredness: t = "
                  << format_double(tt.t_statistic) << ", two-tailed p = "
                  << format_double(tt.p_value) << '\n';
    }
    std::cout << "wrote centeredness.csv, topology.csv and plots to " << out_dir << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

int cmd_compare(const std::string& data_a, const std::string& data_b,
                const std::string& out_dir, RunConfig cfg, const std::string& integrator) {
    Population pop_a = load_dataset(data_a);
    Population pop_b = load_dataset(data_b);
    const BaselineMethod method = baseline_from_name(integrator);
    fs::create_directories(out_dir);

    ClassificationReport report = classification_protocol(
        pop_a, pop_b, baseline_integrator(method), cfg.k_values, cfg.folds, cfg.train.seed);
    write_classification_csv("a_vs_b", integrator, report,
                             fs::path(out_dir) / "classification.csv");

    // ranked edges from the full populations
    std::vector<const MultiViewSample*> all_a, all_b;
    for (const auto& s : pop_a.samples) all_a.push_back(&s);
    for (const auto& s : pop_b.samples) all_b.push_back(&s);
    DiscriminativenessMatrix scores =
        discriminativeness(baseline_template(all_a, method).matrix,
                           baseline_template(all_b, method).matrix);
    const std::size_t k_max =
        std::min(*std::max_element(cfg.k_values.begin(), cfg.k_values.end()),
                 pop_a.n_r * (pop_a.n_r - 1) / 2);
    EdgeSelection selection = top_k(scores, k_max);
    write_selected_edges_json(selection, pop_a.n_r,
                              fs::path(out_dir) / "selected_edges.json");

    std::vector<svg::Chord> chords;
    for (std::size_t e = 0; e < std::min<std::size_t>(5, selection.edges.size()); ++e)
        chords.push_back({selection.edges[e].i, selection.edges[e].j,
                          selection.edges[e].score, ""});
    svg::circular_edge_plot(pop_a.n_r, chords, "Top discriminative connections",
                            fs::path(out_dir) / "top_edges.svg");

    std::cout << "mean accuracy " << format_double(report.mean_accuracy) << " (sigma "
              << format_double(report.std_accuracy) << ") over " << cfg.folds
              << " folds x " << cfg.k_values.size() << " k values\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"population multi-view graph integration: training, evaluation, and "
                 "comparison of connectional templates"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, templates_dir, data_a, data_b;
    std::string measures_arg, k_arg, integrator = "mean";
    std::uint64_t seed_flag = 0;
    double beta_flag = 0.0;
    int folds_flag = 0, jobs_flag = 0, max_epochs_flag = 0, patience_flag = 0;

    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset directory");
    sim->add_option("--spec", config_path, "JSON spec file")->required();
    sim->add_option("--out", out_dir, "output dataset directory")->required();
    auto* sim_seed = sim->add_option("--seed", seed_flag, "override the seed in the spec file");

    auto* train = app.add_subcommand("train", "train one model per fold and write "
                                              "checkpoints, templates, and logs");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--config", config_path, "JSON config file");
    auto* train_beta = train->add_option("--beta", beta_flag, "KL weight (0 ablates it)");
    auto* train_folds = train->add_option("--folds", folds_flag, "fold count");
    auto* train_jobs = train->add_option("--jobs", jobs_flag, "concurrent folds");
    auto* train_seed = train->add_option("--seed", seed_flag, "seed override");
    auto* train_epochs = train->add_option("--max-epochs", max_epochs_flag, "epoch cap");
    auto* train_patience = train->add_option("--patience", patience_flag,
                                             "early-stopping patience");

    auto* eval = app.add_subcommand("evaluate", "score templates against held-out folds");
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--templates", templates_dir, "directory with fold_<f>/template.csv")
        ->required();
    eval->add_option("--out", out_dir, "output directory")->required();
    auto* eval_measures =
        eval->add_option("--measures", measures_arg, "comma-separated topology measures");
    auto* eval_folds = eval->add_option("--folds", folds_flag, "fold count");
    auto* eval_seed = eval->add_option("--seed", seed_flag, "seed override");

    auto* cmp = app.add_subcommand("compare", "discriminative edges and classification "
                                              "between two populations");
    cmp->add_option("--data-a", data_a, "first dataset directory")->required();
    cmp->add_option("--data-b", data_b, "second dataset directory")->required();
    cmp->add_option("--out", out_dir, "output directory")->required();
    cmp->add_option("--config", config_path, "JSON config file");
    auto* cmp_k = cmp->add_option("--k", k_arg, "comma-separated k values");
    auto* cmp_folds = cmp->add_option("--folds", folds_flag, "fold count");
    auto* cmp_seed = cmp->add_option("--seed", seed_flag, "seed override");
    cmp->add_option("--integrator", integrator, "template integrator: mean or median");

    for (CLI::App* sub : {sim, train, eval, cmp})
        sub->set_version_flag("--version", kVersion);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems exit 2; --help/--version exit 0
    }

    try {
        if (app.got_subcommand(sim)) {
            RunConfig cfg = load_run_config(config_path);
            apply_seed_policy(cfg, sim_seed->count() > 0, seed_flag);
            Population pop = simulate_population(cfg.synth);
            save_dataset(pop, out_dir);
            std::cout << "wrote " << pop.size() << " subjects to " << out_dir << '\n';
            return 0;
        }

        RunConfig cfg = load_run_config(
            config_path.empty() ? std::nullopt : std::optional<std::string>(config_path));

        if (app.got_subcommand(train)) {
            apply_seed_policy(cfg, train_seed->count() > 0, seed_flag);
            if (train_beta->count()) cfg.train.beta = beta_flag;
            if (train_folds->count()) cfg.folds = folds_flag;
            if (train_jobs->count()) cfg.jobs = jobs_flag;
            if (train_epochs->count()) cfg.train.max_epochs = max_epochs_flag;
            if (train_patience->count()) cfg.train.patience = patience_flag;
            return cmd_train(data_dir, out_dir, cfg);
        }
        if (app.got_subcommand(eval)) {
            apply_seed_policy(cfg, eval_seed->count() > 0, seed_flag);
            if (eval_folds->count()) cfg.folds = folds_flag;
            if (eval_measures->count()) cfg.measures = split_csv_list(measures_arg);
            return cmd_evaluate(data_dir, templates_dir, out_dir, cfg,
                                eval_folds->count() > 0, eval_seed->count() > 0);
        }
        if (app.got_subcommand(cmp)) {
            apply_seed_policy(cfg, cmp_seed->count() > 0, seed_flag);
            if (cmp_folds->count()) cfg.folds = folds_flag;
            if (cmp_k->count()) cfg.k_values = parse_k_list(k_arg);
            return cmd_compare(data_a, data_b, out_dir, cfg, integrator);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
