#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <graphnorm/dataset.hpp>
#include <graphnorm/model.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace graphnorm;
namespace fs = std::filesystem;

#ifndef GRAPHNORM_CLI_PATH
#error "GRAPHNORM_CLI_PATH must point at the built binary"
#endif

namespace {

struct Sandbox {
    fs::path dir;
    Sandbox() {
        dir = fs::temp_directory_path() /
              ("graphnorm_cli_" + std::to_string(::getpid()) + "_" +
               std::to_string(counter()++));
        fs::create_directories(dir);
    }
    ~Sandbox() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

int run_cli(const Sandbox& box, const std::string& args, std::string* output = nullptr) {
    const fs::path out_file = box.dir / "cli_output.txt";
    const std::string cmd = std::string(GRAPHNORM_CLI_PATH) + " " + args + " > " +
                            out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (output) {
        std::ifstream in(out_file);
        std::stringstream ss;
        ss << in.rdbuf();
        *output = ss.str();
    }
    return WEXITSTATUS(status);
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kSpecJson = R"({
  "n_subjects": 10, "n_r": 6, "n_v": 2,
  "view_means": [0.3, 0.6], "view_max": [1.5, 3.0],
  "noise_scale": 0.3, "seed": 42
})";

const char* kTrainJson = R"({
  "dims": [8, 6, 4], "hidden": 8, "subset_size": 4,
  "max_epochs": 6, "patience": 5, "beta": 10.0, "seed": 42, "folds": 2
})";

}  // namespace

TEST_CASE("help and version exit 0; usage errors exit 2") {
    Sandbox box;
    CHECK(run_cli(box, "--help") == 0);
    CHECK(run_cli(box, "--version") == 0);
    CHECK(run_cli(box, "simulate --version") == 0);
    CHECK(run_cli(box, "train --help") == 0);

    std::string out;
    CHECK(run_cli(box, "", &out) == 2);                    // missing subcommand
    CHECK(run_cli(box, "simulate --out x", &out) == 2);    // missing --spec
    CHECK(run_cli(box, "definitely-not-a-command", &out) == 2);
}

TEST_CASE("simulate writes a loadable dataset, deterministically") {
    Sandbox box;
    write_file(box.dir / "spec.json", kSpecJson);
    const std::string spec = (box.dir / "spec.json").string();

    CHECK(run_cli(box, "simulate --spec " + spec + " --out " + (box.dir / "d1").string()) ==
          0);
    Population pop = load_dataset(box.dir / "d1");
    CHECK(pop.size() == 10);
    CHECK(pop.n_r == 6);

    CHECK(run_cli(box, "simulate --spec " + spec + " --out " + (box.dir / "d2").string()) ==
          0);
    CHECK(slurp(box.dir / "d1" / "manifest.json") == slurp(box.dir / "d2" / "manifest.json"));
    CHECK(slurp(box.dir / "d1" / "subjects" / "s003" / "view_1.csv") ==
          slurp(box.dir / "d2" / "subjects" / "s003" / "view_1.csv"));
}

TEST_CASE("simulate rejects an invalid spec with exit 2") {
    Sandbox box;
    write_file(box.dir / "bad.json", R"({"n_subjects": 0, "n_r": 6, "n_v": 1,
        "view_means": [0.3], "view_max": [1.0], "seed": 1})");
    std::string out;
    CHECK(run_cli(box,
                  "simulate --spec " + (box.dir / "bad.json").string() + " --out " +
                      (box.dir / "d").string(),
                  &out) == 2);
    CHECK(out.find("n_subjects") != std::string::npos);

    write_file(box.dir / "unknown.json", R"({"n_subjects": 4, "bogus_key": 1})");
    CHECK(run_cli(box,
                  "simulate --spec " + (box.dir / "unknown.json").string() + " --out " +
                      (box.dir / "d").string(),
                  &out) == 2);
    CHECK(out.find("bogus_key") != std::string::npos);
}

TEST_CASE("train writes templates, checkpoints, and logs per fold") {
    Sandbox box;
    write_file(box.dir / "spec.json", kSpecJson);
    write_file(box.dir / "train.json", kTrainJson);
    REQUIRE(run_cli(box, "simulate --spec " + (box.dir / "spec.json").string() + " --out " +
                             (box.dir / "data").string()) == 0);
    REQUIRE(run_cli(box, "train --data " + (box.dir / "data").string() + " --config " +
                             (box.dir / "train.json").string() + " --out " +
                             (box.dir / "run").string()) == 0);

    for (int f = 0; f < 2; ++f) {
        const fs::path fold = box.dir / "run" / ("fold_" + std::to_string(f));
        CHECK(fs::exists(fold / "model.json"));
        CHECK(fs::exists(fold / "training_log.csv"));
        Template t{read_matrix_csv(fold / "template.csv")};
        CHECK_NOTHROW(validate_template(t));
        ModelParams m = load_model(fold / "model.json");
        CHECK(m.dims == std::array<std::size_t, 3>{8, 6, 4});
    }
    CHECK(fs::exists(box.dir / "run" / "cv_summary.csv"));
    CHECK(fs::exists(box.dir / "run" / "run.json"));
}

TEST_CASE("train with --beta 0 logs an identically zero KL column") {
    Sandbox box;
    write_file(box.dir / "spec.json", kSpecJson);
    write_file(box.dir / "train.json", kTrainJson);
    REQUIRE(run_cli(box, "simulate --spec " + (box.dir / "spec.json").string() + " --out " +
                             (box.dir / "data").string()) == 0);
    REQUIRE(run_cli(box, "train --data " + (box.dir / "data").string() + " --config " +
                             (box.dir / "train.json").string() + " --beta 0 --out " +
                             (box.dir / "run").string()) == 0);

    std::ifstream log(box.dir / "run" / "fold_0" / "training_log.csv");
    std::string line;
    std::getline(log, line);  // header
    CHECK(line == "epoch,train_loss,train_centeredness,train_kl,test_loss,elapsed_ms");
    int rows = 0;
    while (std::getline(log, line)) {
        std::stringstream ss(line);
        std::string field;
        for (int c = 0; c < 4; ++c) std::getline(ss, field, ',');
        CHECK(field == "0");  // train_kl
        ++rows;
    }
    CHECK(rows >= 1);
}

TEST_CASE("train on a missing dataset exits 2 with a message") {
    Sandbox box;
    std::string out;
    CHECK(run_cli(box,
                  "train --data " + (box.dir / "nowhere").string() + " --out " +
                      (box.dir / "run").string(),
                  &out) == 2);
    CHECK(out.find("missing file") != std::string::npos);
}

TEST_CASE("train twice produces byte-identical outputs except elapsed times") {
    Sandbox box;
    write_file(box.dir / "spec.json", kSpecJson);
    write_file(box.dir / "train.json", kTrainJson);
    REQUIRE(run_cli(box, "simulate --spec " + (box.dir / "spec.json").string() + " --out " +
                             (box.dir / "data").string()) == 0);
    for (const char* run : {"r1", "r2"})
        REQUIRE(run_cli(box, "train --data " + (box.dir / "data").string() + " --config " +
                                 (box.dir / "train.json").string() + " --out " +
                                 (box.dir / run).string()) == 0);

    CHECK(slurp(box.dir / "r1" / "run.json") == slurp(box.dir / "r2" / "run.json"));
    CHECK(slurp(box.dir / "r1" / "cv_summary.csv") == slurp(box.dir / "r2" / "cv_summary.csv"));
    for (int f = 0; f < 2; ++f) {
        const std::string fold = "fold_" + std::to_string(f);
        CHECK(slurp(box.dir / "r1" / fold / "template.csv") ==
              slurp(box.dir / "r2" / fold / "template.csv"));
        CHECK(slurp(box.dir / "r1" / fold / "model.json") ==
              slurp(box.dir / "r2" / fold / "model.json"));

        // logs agree once the wall-clock column is stripped
        auto strip_elapsed = [](const std::string& text) {
            std::stringstream in(text), out;
            std::string line;
            while (std::getline(in, line)) {
                const auto last_comma = line.rfind(',');
                out << line.substr(0, last_comma) << '\n';
            }
            return out.str();
        };
        CHECK(strip_elapsed(slurp(box.dir / "r1" / fold / "training_log.csv")) ==
              strip_elapsed(slurp(box.dir / "r2" / fold / "training_log.csv")));
    }
}

TEST_CASE("evaluate emits reports; a template matching the test view scores zero") {
    Sandbox box;
    // two subjects, one view: with 2 folds each test fold is one subject
    Population pop;
    pop.n_r = 5;
    pop.n_v = 1;
    pop.view_names = {"v"};
    Rng rng(9);
    for (int s = 0; s < 2; ++s) {
        MultiViewSample mv;
        mv.subject_id = "s" + std::to_string(s);
        mv.label = "x";
        Tensor m({5, 5});
        for (std::size_t i = 0; i + 1 < 5; ++i)
            for (std::size_t j = i + 1; j < 5; ++j) {
                const double w = rng.uniform(0.1, 1.0);
                m(i, j) = w;
                m(j, i) = w;
            }
        mv.views = {m};
        pop.samples.push_back(mv);
    }
    save_dataset(pop, box.dir / "data");

    // figure out which subject fold 0 holds out, then use its view as the template
    FoldAssignment fa = split_folds(pop, 2, 7);
    for (int f = 0; f < 2; ++f) {
        fs::create_directories(box.dir / "templates" / ("fold_" + std::to_string(f)));
        const std::size_t test_subject = fa.test_indices(f)[0];
        write_matrix_csv(pop.samples[test_subject].views[0],
                         box.dir / "templates" / ("fold_" + std::to_string(f)) /
                             "template.csv");
    }

    std::string out;
    REQUIRE(run_cli(box,
                    "evaluate --data " + (box.dir / "data").string() + " --templates " +
                        (box.dir / "templates").string() + " --out " +
                        (box.dir / "eval").string() + " --folds 2 --seed 7",
                    &out) == 0);

    std::ifstream csv(box.dir / "eval" / "centeredness.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "fold,method,v,overall");
    bool found_zero = false;
    while (std::getline(csv, line))
        if (line.find("learned") != std::string::npos &&
            line.substr(line.size() - 2) == ",0")
            found_zero = true;
    CHECK(found_zero);

    // four measures requested -> four topology rows per (fold, method)
    std::ifstream topo(box.dir / "eval" / "topology.csv");
    std::getline(topo, line);
    std::map<std::string, int> rows_per_fold_method;
    while (std::getline(topo, line)) {
        const auto second_comma = line.find(',', line.find(',') + 1);
        rows_per_fold_method[line.substr(0, second_comma)]++;
    }
    CHECK(rows_per_fold_method.size() == 6);  // 2 folds x 3 methods
    for (const auto& [key, count] : rows_per_fold_method) CHECK(count == 4);

    CHECK(fs::exists(box.dir / "eval" / "centeredness.svg"));
    CHECK(fs::exists(box.dir / "eval" / "topology_pagerank.svg"));
}

TEST_CASE("evaluate rejects an unknown measure, listing valid names") {
    Sandbox box;
    write_file(box.dir / "spec.json", kSpecJson);
    REQUIRE(run_cli(box, "simulate --spec " + (box.dir / "spec.json").string() + " --out " +
                             (box.dir / "data").string()) == 0);
    std::string out;
    CHECK(run_cli(box,
                  "evaluate --data " + (box.dir / "data").string() + " --templates " +
                      (box.dir / "nowhere").string() + " --out " +
                      (box.dir / "eval").string() + " --measures strength,bogus --folds 2",
                  &out) == 2);
    CHECK(out.find("unknown measure 'bogus'") != std::string::npos);
    CHECK(out.find("pagerank") != std::string::npos);
    CHECK(out.find("effective_size") != std::string::npos);
}

TEST_CASE("compare runs a restricted k list and rejects incompatible shapes") {
    Sandbox box;
    write_file(box.dir / "spec.json", kSpecJson);
    std::string spec_b(kSpecJson);
    spec_b.replace(spec_b.find("\"seed\": 42"), 10, "\"seed\": 43");
    write_file(box.dir / "spec_b.json", spec_b);
    REQUIRE(run_cli(box, "simulate --spec " + (box.dir / "spec.json").string() + " --out " +
                             (box.dir / "a").string()) == 0);
    REQUIRE(run_cli(box, "simulate --spec " + (box.dir / "spec_b.json").string() +
                             " --out " + (box.dir / "b").string()) == 0);

    REQUIRE(run_cli(box, "compare --data-a " + (box.dir / "a").string() + " --data-b " +
                             (box.dir / "b").string() + " --k 5 --folds 2 --out " +
                             (box.dir / "cmp").string()) == 0);
    std::ifstream csv(box.dir / "cmp" / "classification.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "task,method,k,fold,accuracy");
    int rows = 0;
    while (std::getline(csv, line)) {
        CHECK(line.find(",5,") != std::string::npos);  // single k value
        ++rows;
    }
    CHECK(rows == 2);  // 2 folds x 1 k
    CHECK(fs::exists(box.dir / "cmp" / "selected_edges.json"));
    CHECK(fs::exists(box.dir / "cmp" / "top_edges.svg"));

    // incompatible n_r
    std::string spec_c(kSpecJson);
    spec_c.replace(spec_c.find("\"n_r\": 6"), 8, "\"n_r\": 7");
    write_file(box.dir / "spec_c.json", spec_c);
    REQUIRE(run_cli(box, "simulate --spec " + (box.dir / "spec_c.json").string() +
                             " --out " + (box.dir / "c").string()) == 0);
    std::string out;
    CHECK(run_cli(box,
                  "compare --data-a " + (box.dir / "a").string() + " --data-b " +
                      (box.dir / "c").string() + " --k 5 --folds 2 --out " +
                      (box.dir / "cmp2").string(),
                  &out) == 2);
    CHECK(out.find("disagree") != std::string::npos);
}

TEST_CASE("GRAPHNORM_SEED fills in when no seed is given") {
    Sandbox box;
    // spec without a seed key
    write_file(box.dir / "spec.json", R"({
      "n_subjects": 4, "n_r": 5, "n_v": 1,
      "view_means": [0.4], "view_max": [2.0], "noise_scale": 0.2
    })");
    const std::string spec = (box.dir / "spec.json").string();
    const std::string base = std::string(GRAPHNORM_CLI_PATH) + " simulate --spec " + spec;

    std::string cmd1 = "GRAPHNORM_SEED=99 " + base + " --out " + (box.dir / "e1").string() +
                       " > /dev/null 2>&1";
    std::string cmd2 = "GRAPHNORM_SEED=99 " + base + " --out " + (box.dir / "e2").string() +
                       " > /dev/null 2>&1";
    std::string cmd3 = "GRAPHNORM_SEED=100 " + base + " --out " + (box.dir / "e3").string() +
                       " > /dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd1.c_str())) == 0);
    REQUIRE(WEXITSTATUS(std::system(cmd2.c_str())) == 0);
    REQUIRE(WEXITSTATUS(std::system(cmd3.c_str())) == 0);

    const std::string v1 = slurp(box.dir / "e1" / "subjects" / "s001" / "view_0.csv");
    CHECK(v1 == slurp(box.dir / "e2" / "subjects" / "s001" / "view_0.csv"));
    CHECK(v1 != slurp(box.dir / "e3" / "subjects" / "s001" / "view_0.csv"));
}
