#ifndef EML_METRICS_HPP
#define EML_METRICS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eml/grid.hpp"

namespace eml::metrics {

struct MetricConfig {
    double epsilon = 1e-7;      // regularizer in the KLD formula
    int auc_thresholds = 10;    // threshold levels for the sampled-AUC sweep
    int borji_splits = 100;     // random negative-sample draws
    int emd_downsample = 32;    // max side length fed to the transport solver
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct MetricEntry {
    std::string name;
    std::optional<double> value;
    std::string absent_reason; // set when value is empty
};

// Ordered metric -> value table for one prediction set. Names are unique.
struct MetricReport {
    std::vector<MetricEntry> entries;
    std::string prediction_id;
    std::string ground_truth_id;
    MetricConfig config;

    void add(const std::string& name, double value);
    void add_absent(const std::string& name, const std::string& reason);
    const MetricEntry* find(const std::string& name) const;

    // One "name<TAB>value" line per metric, 4 decimal places; absent
    // metrics carry their reason instead of a value.
    std::string to_tsv() const;
    // Full-precision machine-readable document.
    std::string to_json() const;
};

// Mean over a set of per-image reports; a metric is averaged over the
// images where it is present.
MetricReport aggregate_mean(const std::vector<MetricReport>& reports);

// Table-style row: the named columns formatted "%.3f", space-separated.
// Missing columns render as "-".
std::string render_table_row(const MetricReport& report,
                             const std::vector<std::string>& columns);

// --- reference metrics ------------------------------------------------

// sum_i Q_i * log(eps + Q_i / (P_i + eps)), both maps sum-normalized first.
double kld(const DensityMap& p, const DensityMap& q, double eps);

// Pearson correlation, population convention, clamped to [-1, 1].
double cc(const DensityMap& p, const DensityMap& q);

// Mean standardized prediction value over fixated pixels.
double nss(const DensityMap& p, const FixationMap& f);

// Histogram intersection of the sum-normalized maps, in [0, 1].
double sim(const DensityMap& p, const DensityMap& q);

// ROC area with fixated pixels as positives and every other pixel as a
// negative; thresholds sweep the fixated pixels' values, >= counts as
// positive, trapezoidal integration with (0,0) and (1,1) endpoints.
double auc_judd(const DensityMap& p, const FixationMap& f);

// ROC area with per-split random negatives (uniform over all pixels, one
// negative per fixation), averaged over cfg.borji_splits draws.
// Deterministic given cfg.rng_seed.
double auc_borji(const DensityMap& p, const FixationMap& f, const MetricConfig& cfg);

// Shuffled AUC: negatives drawn from the union of other images' fixation
// locations. Deterministic given cfg.rng_seed.
double sauc(const DensityMap& p, const FixationMap& f,
            const std::vector<FixationMap>& other_f, const MetricConfig& cfg);

// Exact minimum-cost transport between the sum-normalized maps with
// Euclidean distance between cell centers, after box-downsampling both so
// max(side) <= cfg.emd_downsample.
double emd(const DensityMap& p, const DensityMap& q, const MetricConfig& cfg);

// (1/N) * sum over fixated pixels of log2(eps+P_i) - log2(eps+B_i),
// both maps sum-normalized; bits of information over the baseline.
double info_gain(const DensityMap& p, const DensityMap& baseline,
                 const FixationMap& f, double eps);

// Centered isotropic Gaussian center prior (sigma = min(w,h)/4),
// sum-normalized; the default info_gain baseline.
DensityMap center_prior(int width, int height);

// Full report: NSS, CC, AUC-Judd, AUC-Borji, sAUC, KLD, SIM, EMD, IG.
// Metrics whose preconditions fail are reported absent with the reason.
MetricReport evaluate_all(const DensityMap& p, const DensityMap& q,
                          const FixationMap& f,
                          const std::vector<FixationMap>& other_f,
                          const DensityMap& baseline, const MetricConfig& cfg);

} // namespace eml::metrics

#endif
