#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphnorm/rng.hpp"
#include "graphnorm/tensor.hpp"

namespace graphnorm {

/// One subject: n_v stacked symmetric nonnegative adjacency matrices
/// over a shared node set, plus a class tag.
struct MultiViewSample {
    std::string subject_id;
    std::string label;
    std::vector<Tensor> views;  // each n_r x n_r

    std::size_t n_r() const { return views.empty() ? 0 : views[0].rows(); }
    std::size_t n_v() const { return views.size(); }
};

struct Population {
    std::vector<MultiViewSample> samples;
    std::size_t n_r = 0;
    std::size_t n_v = 0;
    std::vector<std::string> view_names;

    std::size_t size() const { return samples.size(); }
};

struct FoldAssignment {
    int k = 0;
    std::vector<int> assignment;  // per-sample fold index in [0, k)

    std::vector<std::size_t> train_indices(int fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignment.size(); ++i)
            if (assignment[i] != fold) out.push_back(i);
        return out;
    }

    std::vector<std::size_t> test_indices(int fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignment.size(); ++i)
            if (assignment[i] == fold) out.push_back(i);
        return out;
    }
};

struct SyntheticSpec {
    std::size_t n_subjects = 0;
    std::size_t n_r = 0;
    std::size_t n_v = 0;
    std::vector<double> view_means;  // target mean off-diagonal weight per view
    std::vector<double> view_max;    // clip ceiling per view
    double noise_scale = 0.3;        // per-subject noise sigma, relative to the view mean
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Serialization helpers. All floats go out with 17 significant digits so
// that load(save(x)) reproduces doubles bit-exactly.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_matrix_csv(const Tensor& m, const std::filesystem::path& path) {
    if (m.rank() != 2) throw ValidationError("write_matrix_csv needs a rank-2 tensor");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline Tensor read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("missing file: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        const char* p = line.c_str();
        while (true) {
            char* end = nullptr;
            const double v = std::strtod(p, &end);
            if (end == p)
                throw ValidationError("bad number in " + path.string() + " row " +
                                      std::to_string(rows.size()));
            row.push_back(v);
            p = end;
            while (*p == ' ') ++p;
            if (*p == ',') {
                ++p;
                continue;
            }
            if (*p == '\0' || *p == '\r') break;
            throw ValidationError("malformed CSV in " + path.string() + " row " +
                                  std::to_string(rows.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("empty matrix file: " + path.string());
    Tensor m({rows.size(), rows[0].size()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size())
            throw ValidationError("ragged matrix in " + path.string() + ": row " +
                                  std::to_string(i) + " has " +
                                  std::to_string(rows[i].size()) + " values, expected " +
                                  std::to_string(rows[0].size()));
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Checks one view against the per-view invariants: square, finite,
/// nonnegative, zero diagonal, exactly symmetric as stored. Asymmetry
/// reports the worst offending entry and its indices.
inline void validate_view(const Tensor& m, const std::string& subject,
                          const std::string& view) {
    const std::string where = "view '" + view + "' of subject '" + subject + "'";
    if (m.rank() != 2 || m.rows() != m.cols())
        throw ValidationError(where + " is not square: " + shape_str(m));
    const std::size_t n = m.rows();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double v = m(i, j);
            if (!std::isfinite(v))
                throw ValidationError(where + " has non-finite entry at (" +
                                      std::to_string(i) + "," + std::to_string(j) + ")");
            if (v < 0.0)
                throw ValidationError(where + " has negative entry " + format_double(v) +
                                      " at (" + std::to_string(i) + "," +
                                      std::to_string(j) + ")");
        }
        if (m(i, i) != 0.0)
            throw ValidationError(where + " has nonzero diagonal at (" + std::to_string(i) +
                                  "," + std::to_string(i) + ")");
    }
    double worst = 0.0;
    std::size_t wi = 0, wj = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = std::fabs(m(i, j) - m(j, i));
            if (d > worst) {
                worst = d;
                wi = i;
                wj = j;
            }
        }
    if (worst != 0.0)
        throw ValidationError(where + " is asymmetric: worst offender |M[" +
                              std::to_string(wi) + "][" + std::to_string(wj) + "] - M[" +
                              std::to_string(wj) + "][" + std::to_string(wi) +
                              "]| = " + format_double(worst));
}

inline void validate_population(const Population& p) {
    if (p.samples.empty()) throw ValidationError("population must contain >= 1 sample");
    if (p.n_r < 2) throw ValidationError("population needs n_r >= 2");
    if (p.view_names.size() != p.n_v)
        throw ValidationError("view_names count does not match n_v");
    std::map<std::string, int> seen;
    for (const MultiViewSample& s : p.samples) {
        if (++seen[s.subject_id] > 1)
            throw ValidationError("duplicate subject_id '" + s.subject_id + "'");
        if (s.views.size() != p.n_v)
            throw ValidationError("subject '" + s.subject_id + "' has " +
                                  std::to_string(s.views.size()) + " views, expected " +
                                  std::to_string(p.n_v));
        for (std::size_t v = 0; v < s.views.size(); ++v) {
            if (s.views[v].rank() != 2 || s.views[v].rows() != p.n_r ||
                s.views[v].cols() != p.n_r)
                throw ValidationError("view '" + p.view_names[v] + "' of subject '" +
                                      s.subject_id + "' has shape " +
                                      shape_str(s.views[v]) + ", expected [" +
                                      std::to_string(p.n_r) + "x" + std::to_string(p.n_r) +
                                      "]");
            validate_view(s.views[v], s.subject_id, p.view_names[v]);
        }
    }
}

// ---------------------------------------------------------------------------
// Dataset directory I/O
//
// <dir>/manifest.json            n_r, n_v, view_names, subjects [{id,label}]
// <dir>/subjects/<id>/view_<v>.csv
// ---------------------------------------------------------------------------

inline void save_dataset(const Population& p, const std::filesystem::path& dir) {
    validate_population(p);
    std::filesystem::create_directories(dir / "subjects");

    nlohmann::ordered_json manifest;
    manifest["n_r"] = p.n_r;
    manifest["n_v"] = p.n_v;
    manifest["view_names"] = p.view_names;
    auto& subjects = manifest["subjects"] = nlohmann::ordered_json::array();
    for (const MultiViewSample& s : p.samples)
        subjects.push_back({{"id", s.subject_id}, {"label", s.label}});

    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("cannot write manifest: " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << '\n';

    for (const MultiViewSample& s : p.samples) {
        const auto sdir = dir / "subjects" / s.subject_id;
        std::filesystem::create_directories(sdir);
        for (std::size_t v = 0; v < s.views.size(); ++v)
            write_matrix_csv(s.views[v], sdir / ("view_" + std::to_string(v) + ".csv"));
    }
}

inline Population load_dataset(const std::filesystem::path& dir) {
    const auto mpath = dir / "manifest.json";
    std::ifstream mf(mpath);
    if (!mf) throw ValidationError("missing file: " + mpath.string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed manifest " + mpath.string() + ": " + e.what());
    }
    for (const char* key : {"n_r", "n_v", "view_names", "subjects"})
        if (!manifest.contains(key))
            throw ValidationError("manifest missing key '" + std::string(key) + "'");

    Population p;
    p.n_r = manifest["n_r"].get<std::size_t>();
    p.n_v = manifest["n_v"].get<std::size_t>();
    p.view_names = manifest["view_names"].get<std::vector<std::string>>();
    if (p.view_names.size() != p.n_v)
        throw ValidationError("manifest view_names count does not match n_v");

    for (const auto& subj : manifest["subjects"]) {
        MultiViewSample s;
        s.subject_id = subj.at("id").get<std::string>();
        s.label = subj.at("label").get<std::string>();
        for (std::size_t v = 0; v < p.n_v; ++v) {
            const auto vpath =
                dir / "subjects" / s.subject_id / ("view_" + std::to_string(v) + ".csv");
            s.views.push_back(read_matrix_csv(vpath));
        }
        p.samples.push_back(std::move(s));
    }
    validate_population(p);
    return p;
}

// ---------------------------------------------------------------------------
// Synthetic populations
// ---------------------------------------------------------------------------

inline void validate_spec(const SyntheticSpec& spec) {
    if (spec.n_subjects < 2) throw ValidationError("synthetic spec needs n_subjects >= 2");
    if (spec.n_r < 2) throw ValidationError("synthetic spec needs n_r >= 2");
    if (spec.n_v < 1) throw ValidationError("synthetic spec needs n_v >= 1");
    if (spec.view_means.size() != spec.n_v || spec.view_max.size() != spec.n_v)
        throw ValidationError("synthetic spec view_means/view_max must have n_v entries");
    if (spec.noise_scale < 0.0) throw ValidationError("noise_scale must be >= 0");
    for (std::size_t v = 0; v < spec.n_v; ++v) {
        if (spec.view_means[v] <= 0.0)
            throw ValidationError("view_means must be positive");
        if (spec.view_means[v] >= spec.view_max[v])
            throw ValidationError("view_means[" + std::to_string(v) +
                                  "] must be below view_max[" + std::to_string(v) + "]");
    }
}

/// Deterministic population around a shared per-view prototype. Each
/// view's prototype combines a per-node activity factor (hub structure,
/// so node-strength profiles are genuinely non-uniform) with uniform
/// edge noise, rescaled so the empirical off-diagonal mean hits the
/// target before clipping. Each subject then adds Gaussian noise with
/// sigma = noise_scale * m_v; entries are clipped to [0, view_max[v]],
/// symmetric by construction, zero diagonal.
inline Population simulate_population(const SyntheticSpec& spec) {
    validate_spec(spec);
    Rng rng(spec.seed);

    std::vector<Tensor> prototypes;
    prototypes.reserve(spec.n_v);
    for (std::size_t v = 0; v < spec.n_v; ++v) {
        const double m = spec.view_means[v];
        std::vector<double> activity(spec.n_r);
        for (double& a : activity) a = rng.uniform(0.5, 1.5);

        Tensor proto({spec.n_r, spec.n_r});
        double raw_mean = 0.0;
        for (std::size_t i = 0; i + 1 < spec.n_r; ++i)
            for (std::size_t j = i + 1; j < spec.n_r; ++j) {
                const double w = rng.uniform(0.5 * m, 1.5 * m) * activity[i] * activity[j];
                proto(i, j) = w;
                proto(j, i) = w;
                raw_mean += w;
            }
        raw_mean /= static_cast<double>(spec.n_r * (spec.n_r - 1) / 2);
        const double rescale = m / raw_mean;
        for (double& w : proto.data) w = std::min(w * rescale, spec.view_max[v]);
        prototypes.push_back(std::move(proto));
    }

    Population p;
    p.n_r = spec.n_r;
    p.n_v = spec.n_v;
    for (std::size_t v = 0; v < spec.n_v; ++v) p.view_names.push_back("view_" + std::to_string(v));

    for (std::size_t s = 0; s < spec.n_subjects; ++s) {
        MultiViewSample sample;
        char id[16];
        std::snprintf(id, sizeof(id), "s%03zu", s);
        sample.subject_id = id;
        sample.label = "synthetic";
        for (std::size_t v = 0; v < spec.n_v; ++v) {
            const double sigma = spec.noise_scale * spec.view_means[v];
            Tensor m({spec.n_r, spec.n_r});
            for (std::size_t i = 0; i + 1 < spec.n_r; ++i)
                for (std::size_t j = i + 1; j < spec.n_r; ++j) {
                    double w = prototypes[v](i, j) + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
                    w = std::min(std::max(w, 0.0), spec.view_max[v]);
                    m(i, j) = w;
                    m(j, i) = w;
                }
            sample.views.push_back(std::move(m));
        }
        p.samples.push_back(std::move(sample));
    }
    validate_population(p);
    return p;
}

// ---------------------------------------------------------------------------
// Fold splitting
// ---------------------------------------------------------------------------

/// Stratified k-fold split. Samples are grouped by label (first-appearance
/// order), each group is shuffled, and groups are dealt round-robin with a
/// dealing pointer that continues across groups, so global fold sizes
/// always differ by at most one. Pure function of (sample order, k, seed).
inline FoldAssignment split_folds(const Population& p, int k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("fold count must be >= 2");
    if (static_cast<std::size_t>(k) > p.size())
        throw ValidationError("fold count " + std::to_string(k) + " exceeds " +
                              std::to_string(p.size()) + " subjects");
    std::vector<std::string> label_order;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const std::string& lbl = p.samples[i].label;
        if (groups.find(lbl) == groups.end()) label_order.push_back(lbl);
        groups[lbl].push_back(i);
    }

    Rng rng(seed);
    FoldAssignment fa;
    fa.k = k;
    fa.assignment.assign(p.size(), 0);
    std::size_t ptr = 0;
    for (const std::string& lbl : label_order) {
        std::vector<std::size_t>& idx = groups[lbl];
        rng.shuffle(idx);
        for (std::size_t i : idx) fa.assignment[i] = static_cast<int>(ptr++ % k);
    }
    return fa;
}

// ---------------------------------------------------------------------------
// Edge feature access
// ---------------------------------------------------------------------------

/// Stacked per-view weights of the undirected connection (i, j).
inline std::vector<double> cross_view_features(const MultiViewSample& s, std::size_t i,
                                               std::size_t j) {
    if (i == j)
        throw ValidationError("cross_view_features: the diagonal (" + std::to_string(i) +
                              "," + std::to_string(j) + ") is not a connection");
    if (i >= s.n_r() || j >= s.n_r())
        throw ValidationError("cross_view_features: node index out of range");
    std::vector<double> out;
    out.reserve(s.n_v());
    for (const Tensor& v : s.views) out.push_back(v(i, j));
    return out;
}

}  // namespace graphnorm
