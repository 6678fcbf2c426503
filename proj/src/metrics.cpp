#include "eml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include <json.hpp>

#include "eml/net.hpp"
#include "eml/simd.hpp"

namespace eml::metrics {

using json = nlohmann::ordered_json;

void MetricConfig::validate() const {
    if (!(epsilon > 0.0)) throw DegenerateInput("epsilon must be > 0");
    if (auc_thresholds < 2) throw DegenerateInput("auc_thresholds must be >= 2");
    if (borji_splits < 1) throw DegenerateInput("borji_splits must be >= 1");
    if (emd_downsample < 2) throw DegenerateInput("emd_downsample must be >= 2");
}

void MetricReport::add(const std::string& name, double value) {
    if (find(name)) throw DegenerateInput("duplicate metric name " + name);
    entries.push_back({name, value, {}});
}

void MetricReport::add_absent(const std::string& name, const std::string& reason) {
    if (find(name)) throw DegenerateInput("duplicate metric name " + name);
    entries.push_back({name, std::nullopt, reason});
}

const MetricEntry* MetricReport::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

std::string MetricReport::to_tsv() const {
    std::ostringstream out;
    if (!prediction_id.empty()) out << "# prediction: " << prediction_id << "\n";
    if (!ground_truth_id.empty()) out << "# ground_truth: " << ground_truth_id << "\n";
    char buf[64];
    for (const auto& e : entries) {
        if (e.value) {
            std::snprintf(buf, sizeof buf, "%.4f", *e.value);
            out << e.name << '\t' << buf << '\n';
        } else {
            out << e.name << "\tn/a (" << e.absent_reason << ")\n";
        }
    }
    return out.str();
}

std::string MetricReport::to_json() const {
    json j;
    j["prediction_id"] = prediction_id;
    j["ground_truth_id"] = ground_truth_id;
    j["config"] = {{"epsilon", config.epsilon},
                   {"auc_thresholds", config.auc_thresholds},
                   {"borji_splits", config.borji_splits},
                   {"emd_downsample", config.emd_downsample},
                   {"rng_seed", config.rng_seed}};
    j["metrics"] = json::array();
    for (const auto& e : entries) {
        json m;
        m["name"] = e.name;
        if (e.value)
            m["value"] = *e.value;
        else
            m["absent"] = e.absent_reason;
        j["metrics"].push_back(m);
    }
    return j.dump(2) + "\n";
}

MetricReport aggregate_mean(const std::vector<MetricReport>& reports) {
    MetricReport agg;
    agg.prediction_id = "aggregate";
    if (!reports.empty()) agg.config = reports.front().config;
    std::vector<std::string> order;
    for (const auto& r : reports)
        for (const auto& e : r.entries)
            if (std::find(order.begin(), order.end(), e.name) == order.end())
                order.push_back(e.name);
    for (const auto& name : order) {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : reports) {
            const MetricEntry* e = r.find(name);
            if (e && e->value) {
                sum += *e->value;
                ++n;
            }
        }
        if (n > 0)
            agg.add(name, sum / n);
        else
            agg.add_absent(name, "absent in every report");
    }
    return agg;
}

std::string render_table_row(const MetricReport& report,
                             const std::vector<std::string>& columns) {
    std::string row;
    char buf[64];
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) row += ' ';
        const MetricEntry* e = report.find(columns[i]);
        if (e && e->value) {
            std::snprintf(buf, sizeof buf, "%.3f", *e->value);
            row += buf;
        } else {
            row += '-';
        }
    }
    return row;
}

// --- helpers ------------------------------------------------------------

namespace {

void require_same_shape(const DensityMap& a, const DensityMap& b) {
    if (!a.same_shape(b))
        throw ShapeMismatch(std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                            " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
}

void require_same_shape(const DensityMap& a, const FixationMap& f) {
    if (a.width() != f.width() || a.height() != f.height())
        throw ShapeMismatch(std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                            " vs fixation map " + std::to_string(f.width()) + "x" +
                            std::to_string(f.height()));
}

// Trapezoidal area under monotone (fpr, tpr) points bracketed by (0,0)
// and (1,1).
double trapezoid_auc(const std::vector<double>& fpr, const std::vector<double>& tpr) {
    double area = 0.0;
    double px = 0.0, py = 0.0;
    for (std::size_t i = 0; i < fpr.size(); ++i) {
        area += (fpr[i] - px) * (tpr[i] + py) * 0.5;
        px = fpr[i];
        py = tpr[i];
    }
    area += (1.0 - px) * (1.0 + py) * 0.5;
    return area;
}

// AUC from a level sweep over [0,1]-normalized saliency: thresholds
// descend over auc_thresholds+1 evenly spaced levels.
double level_auc(const std::vector<double>& positives,
                 const std::vector<double>& negatives, int levels) {
    std::vector<double> fpr, tpr;
    fpr.reserve(levels + 1);
    tpr.reserve(levels + 1);
    for (int j = levels; j >= 0; --j) {
        const double t = double(j) / levels;
        std::size_t tp = 0, fp = 0;
        for (double v : positives) tp += v >= t;
        for (double v : negatives) fp += v >= t;
        fpr.push_back(double(fp) / negatives.size());
        tpr.push_back(double(tp) / positives.size());
    }
    return trapezoid_auc(fpr, tpr);
}

// Whole-map min-max normalization to [0,1]; constant maps come back all
// zero (the sweep then scores 0.5, chance).
std::vector<double> minmax_normalize(const DensityMap& p) {
    const auto& v = p.values();
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    std::vector<double> out(v.size(), 0.0);
    if (*mx > *mn) {
        const double inv = 1.0 / (*mx - *mn);
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *mn) * inv;
    }
    return out;
}

std::vector<std::size_t> fixated_indices(const FixationMap& f) {
    std::vector<std::size_t> idx;
    const auto& v = f.values();
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i]) idx.push_back(i);
    return idx;
}

} // namespace

// --- metrics ------------------------------------------------------------

double kld(const DensityMap& p, const DensityMap& q, double eps) {
    require_same_shape(p, q);
    const DensityMap pn = normalize_sum(p);
    const DensityMap qn = normalize_sum(q);
    double acc = 0.0;
    for (std::size_t i = 0; i < pn.size(); ++i) {
        const double qi = qn.values()[i];
        if (qi == 0.0) continue;
        acc += qi * std::log(eps + qi / (pn.values()[i] + eps));
    }
    return acc;
}

double cc(const DensityMap& p, const DensityMap& q) {
    require_same_shape(p, q);
    const auto& k = simd::active_kernels();
    const double n = double(p.size());
    const double mp = k.sum(p.data(), p.size()) / n;
    const double mq = k.sum(q.data(), q.size()) / n;
    const double vp = k.centered_sq_sum(p.data(), mp, p.size()) / n;
    const double vq = k.centered_sq_sum(q.data(), mq, q.size()) / n;
    if (vp <= 0.0 || vq <= 0.0)
        throw DegenerateInput("cc requires non-constant maps");
    const double cov = k.centered_dot(p.data(), mp, q.data(), mq, p.size()) / n;
    return std::clamp(cov / (std::sqrt(vp) * std::sqrt(vq)), -1.0, 1.0);
}

double nss(const DensityMap& p, const FixationMap& f) {
    require_same_shape(p, f);
    const std::size_t n_fix = f.count();
    if (n_fix == 0) throw EmptyFixations("nss needs at least one fixation");
    const Grid pbar = standardize(p); // throws DegenerateInput on constant P
    double acc = 0.0;
    for (std::size_t i = 0; i < pbar.size(); ++i)
        if (f.values()[i]) acc += pbar.values()[i];
    return acc / double(n_fix);
}

double sim(const DensityMap& p, const DensityMap& q) {
    require_same_shape(p, q);
    const DensityMap pn = normalize_sum(p);
    const DensityMap qn = normalize_sum(q);
    return simd::active_kernels().min_sum(pn.data(), qn.data(), pn.size());
}

double auc_judd(const DensityMap& p, const FixationMap& f) {
    require_same_shape(p, f);
    const std::size_t n_fix = f.count();
    if (n_fix == 0) throw EmptyFixations("auc_judd needs at least one fixation");
    if (n_fix == p.size()) throw AllFixated("auc_judd needs a non-fixated pixel");

    std::vector<double> fix_vals, other_vals;
    fix_vals.reserve(n_fix);
    other_vals.reserve(p.size() - n_fix);
    for (std::size_t i = 0; i < p.size(); ++i) {
        (f.values()[i] ? fix_vals : other_vals).push_back(p.values()[i]);
    }
    std::sort(fix_vals.begin(), fix_vals.end());
    std::sort(other_vals.begin(), other_vals.end());

    // Thresholds at the distinct fixated values, descending; >= counts as
    // positive, so both rates are nondecreasing along the sweep.
    std::vector<double> thresholds(fix_vals.rbegin(), fix_vals.rend());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::vector<double> fpr, tpr;
    fpr.reserve(thresholds.size());
    tpr.reserve(thresholds.size());
    for (double t : thresholds) {
        const auto tp = fix_vals.end() - std::lower_bound(fix_vals.begin(), fix_vals.end(), t);
        const auto fp = other_vals.end() - std::lower_bound(other_vals.begin(), other_vals.end(), t);
        tpr.push_back(double(tp) / double(n_fix));
        fpr.push_back(double(fp) / double(other_vals.size()));
    }
    return trapezoid_auc(fpr, tpr);
}

double auc_borji(const DensityMap& p, const FixationMap& f, const MetricConfig& cfg) {
    require_same_shape(p, f);
    cfg.validate();
    const auto fix_idx = fixated_indices(f);
    if (fix_idx.empty()) throw EmptyFixations("auc_borji needs at least one fixation");

    const std::vector<double> norm = minmax_normalize(p);
    std::vector<double> positives(fix_idx.size());
    for (std::size_t i = 0; i < fix_idx.size(); ++i) positives[i] = norm[fix_idx[i]];

    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<double> negatives(positives.size());
    double acc = 0.0;
    for (int s = 0; s < cfg.borji_splits; ++s) {
        for (auto& v : negatives) v = norm[net::bounded(rng, norm.size())];
        acc += level_auc(positives, negatives, cfg.auc_thresholds);
    }
    return acc / cfg.borji_splits;
}

double sauc(const DensityMap& p, const FixationMap& f,
            const std::vector<FixationMap>& other_f, const MetricConfig& cfg) {
    require_same_shape(p, f);
    cfg.validate();
    const auto fix_idx = fixated_indices(f);
    if (fix_idx.empty()) throw EmptyFixations("sauc needs at least one fixation");

    // Negative pool: union of the other maps' fixation locations.
    std::vector<std::uint8_t> in_pool(p.size(), 0);
    for (const auto& of : other_f) {
        require_same_shape(p, of);
        for (std::size_t i = 0; i < of.values().size(); ++i)
            if (of.values()[i]) in_pool[i] = 1;
    }
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < in_pool.size(); ++i)
        if (in_pool[i]) pool.push_back(i);
    if (pool.empty()) throw EmptyNegativePool("no fixations in other maps");

    const std::vector<double> norm = minmax_normalize(p);
    std::vector<double> positives(fix_idx.size());
    for (std::size_t i = 0; i < fix_idx.size(); ++i) positives[i] = norm[fix_idx[i]];

    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<double> negatives(positives.size());
    double acc = 0.0;
    for (int s = 0; s < cfg.borji_splits; ++s) {
        for (auto& v : negatives) v = norm[pool[net::bounded(rng, pool.size())]];
        acc += level_auc(positives, negatives, cfg.auc_thresholds);
    }
    return acc / cfg.borji_splits;
}

double info_gain(const DensityMap& p, const DensityMap& baseline,
                 const FixationMap& f, double eps) {
    require_same_shape(p, baseline);
    require_same_shape(p, f);
    const std::size_t n_fix = f.count();
    if (n_fix == 0) throw EmptyFixations("info_gain needs at least one fixation");
    const DensityMap pn = normalize_sum(p);
    const DensityMap bn = normalize_sum(baseline);
    double acc = 0.0;
    for (std::size_t i = 0; i < pn.size(); ++i) {
        if (!f.values()[i]) continue;
        acc += std::log2(eps + pn.values()[i]) - std::log2(eps + bn.values()[i]);
    }
    return acc / double(n_fix);
}

DensityMap center_prior(int width, int height) {
    Grid g(width, height);
    const double cx = (width - 1) / 2.0;
    const double cy = (height - 1) / 2.0;
    const double sigma = std::min(width, height) / 4.0;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            g.at(x, y) = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) * inv2s2);
    return normalize_sum(DensityMap(std::move(g)));
}

MetricReport evaluate_all(const DensityMap& p, const DensityMap& q,
                          const FixationMap& f,
                          const std::vector<FixationMap>& other_f,
                          const DensityMap& baseline, const MetricConfig& cfg) {
    require_same_shape(p, q);
    require_same_shape(p, f);
    require_same_shape(p, baseline);
    for (const auto& of : other_f) require_same_shape(p, of);
    cfg.validate();

    MetricReport report;
    report.config = cfg;
    const auto run = [&report](const std::string& name, auto&& fn) {
        try {
            report.add(name, fn());
        } catch (const Error& e) {
            report.add_absent(name, e.what());
        }
    };
    run("NSS", [&] { return nss(p, f); });
    run("CC", [&] { return cc(p, q); });
    run("AUC-Judd", [&] { return auc_judd(p, f); });
    run("AUC-Borji", [&] { return auc_borji(p, f, cfg); });
    run("sAUC", [&] { return sauc(p, f, other_f, cfg); });
    run("KLD", [&] { return kld(p, q, cfg.epsilon); });
    run("SIM", [&] { return sim(p, q); });
    run("EMD", [&] { return emd(p, q, cfg); });
    run("IG", [&] { return info_gain(p, baseline, f, cfg.epsilon); });
    return report;
}

} // namespace eml::metrics
