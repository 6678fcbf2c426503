// Earth mover's distance: exact transportation simplex over the nonzero
// bins of two box-downsampled, sum-normalized maps. Euclidean distance
// between cell centers (in downsampled pixel units) is the ground metric.

#include "eml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

namespace eml::metrics {
namespace {

struct Bin {
    double x, y;
    double mass;
};

DensityMap box_downsample(const DensityMap& m, int max_side) {
    const int w = m.width(), h = m.height();
    const int longest = std::max(w, h);
    if (longest <= max_side) return m;
    const int f = (longest + max_side - 1) / max_side;
    const int tw = (w + f - 1) / f;
    const int th = (h + f - 1) / f;
    Grid out(tw, th);
    for (int ty = 0; ty < th; ++ty) {
        const int y0 = ty * f, y1 = std::min(y0 + f, h);
        for (int tx = 0; tx < tw; ++tx) {
            const int x0 = tx * f, x1 = std::min(x0 + f, w);
            double acc = 0.0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) acc += m.at(x, y);
            out.at(tx, ty) = acc / double((x1 - x0) * (y1 - y0));
        }
    }
    return DensityMap(std::move(out));
}

std::vector<Bin> nonzero_bins(const DensityMap& m) {
    std::vector<Bin> bins;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.at(x, y) > 0.0) bins.push_back({double(x), double(y), m.at(x, y)});
    return bins;
}

struct BasicArc {
    int i, j;
    double flow;
};

// Transportation simplex with northwest-corner start. Entering variable is
// the most negative reduced cost (first negative after kBlandSwitch pivots,
// which guarantees termination); the leaving arc is the lexicographically
// smallest minimizer on the cycle.
class TransportSimplex {
public:
    TransportSimplex(std::vector<double> supply, std::vector<double> demand,
                     std::vector<double> cost)
        : m_(int(supply.size())), n_(int(demand.size())),
          supply_(std::move(supply)), demand_(std::move(demand)),
          cost_(std::move(cost)) {}

    double solve() {
        northwest_init();
        const long max_pivots = 1000L * (m_ + n_) + 10000;
        const long bland_switch = 20L * (m_ + n_) + 100;
        for (long pivot = 0; pivot < max_pivots; ++pivot) {
            compute_potentials();
            int ei, ej;
            if (!find_entering(pivot >= bland_switch, ei, ej)) {
                double total = 0.0;
                for (const auto& a : basis_) total += a.flow * cost_[idx(a.i, a.j)];
                return std::max(total, 0.0);
            }
            pivot_on(ei, ej);
        }
        throw Error("transportation simplex failed to converge");
    }

private:
    std::size_t idx(int i, int j) const { return std::size_t(i) * n_ + j; }

    void northwest_init() {
        basis_.clear();
        basis_.reserve(m_ + n_ - 1);
        is_basic_.assign(std::size_t(m_) * n_, 0);
        std::vector<double> s = supply_, d = demand_;
        int i = 0, j = 0;
        while (true) {
            const double a = std::min(s[i], d[j]);
            basis_.push_back({i, j, a});
            is_basic_[idx(i, j)] = 1;
            s[i] -= a;
            d[j] -= a;
            if (i == m_ - 1 && j == n_ - 1) break;
            if (s[i] <= 0.0 && i < m_ - 1)
                ++i;
            else
                ++j;
        }
    }

    // Potentials from the basis tree: u[i] + v[j] = cost(i,j) on basic arcs.
    void compute_potentials() {
        u_.assign(m_, 0.0);
        v_.assign(n_, 0.0);
        std::vector<std::uint8_t> u_known(m_, 0), v_known(n_, 0);
        row_arcs_.assign(m_, {});
        col_arcs_.assign(n_, {});
        for (int a = 0; a < int(basis_.size()); ++a) {
            row_arcs_[basis_[a].i].push_back(a);
            col_arcs_[basis_[a].j].push_back(a);
        }
        std::queue<int> rows, cols;
        u_known[0] = 1;
        rows.push(0);
        while (!rows.empty() || !cols.empty()) {
            if (!rows.empty()) {
                const int i = rows.front();
                rows.pop();
                for (int a : row_arcs_[i]) {
                    const int j = basis_[a].j;
                    if (!v_known[j]) {
                        v_[j] = cost_[idx(i, j)] - u_[i];
                        v_known[j] = 1;
                        cols.push(j);
                    }
                }
            } else {
                const int j = cols.front();
                cols.pop();
                for (int a : col_arcs_[j]) {
                    const int i = basis_[a].i;
                    if (!u_known[i]) {
                        u_[i] = cost_[idx(i, j)] - v_[j];
                        u_known[i] = 1;
                        rows.push(i);
                    }
                }
            }
        }
    }

    bool find_entering(bool bland, int& ei, int& ej) const {
        constexpr double kTol = 1e-11;
        double best = -kTol;
        ei = -1;
        ej = -1;
        for (int i = 0; i < m_; ++i) {
            const double ui = u_[i];
            const double* crow = cost_.data() + idx(i, 0);
            for (int j = 0; j < n_; ++j) {
                if (is_basic_[idx(i, j)]) continue;
                const double r = crow[j] - ui - v_[j];
                if (r < best) {
                    best = r;
                    ei = i;
                    ej = j;
                    if (bland) return true;
                }
            }
        }
        return ei >= 0;
    }

    // Cycle = entering arc + unique tree path from col ej back to row ei.
    // Arcs along the path alternate -theta/+theta starting at -theta.
    void pivot_on(int ei, int ej) {
        const int nodes = m_ + n_; // rows then cols
        std::vector<int> parent_arc(nodes, -1), parent_node(nodes, -1);
        std::vector<std::uint8_t> seen(nodes, 0);
        std::queue<int> q;
        seen[ei] = 1;
        q.push(ei);
        const int target = m_ + ej;
        while (!q.empty()) {
            const int node = q.front();
            q.pop();
            if (node == target) break;
            if (node < m_) {
                for (int a : row_arcs_[node]) {
                    const int other = m_ + basis_[a].j;
                    if (!seen[other]) {
                        seen[other] = 1;
                        parent_arc[other] = a;
                        parent_node[other] = node;
                        q.push(other);
                    }
                }
            } else {
                for (int a : col_arcs_[node - m_]) {
                    const int other = basis_[a].i;
                    if (!seen[other]) {
                        seen[other] = 1;
                        parent_arc[other] = a;
                        parent_node[other] = node;
                        q.push(other);
                    }
                }
            }
        }

        // Walk back from the entering arc's column; odd positions lose flow.
        std::vector<int> minus_arcs, plus_arcs;
        int node = target;
        bool minus = true;
        while (node != ei) {
            const int a = parent_arc[node];
            (minus ? minus_arcs : plus_arcs).push_back(a);
            node = parent_node[node];
            minus = !minus;
        }

        double theta = minus_arcs.empty() ? 0.0 : basis_[minus_arcs[0]].flow;
        int leaving = minus_arcs.empty() ? -1 : minus_arcs[0];
        for (int a : minus_arcs) {
            if (basis_[a].flow < theta ||
                (basis_[a].flow == theta &&
                 (basis_[a].i < basis_[leaving].i ||
                  (basis_[a].i == basis_[leaving].i && basis_[a].j < basis_[leaving].j)))) {
                theta = basis_[a].flow;
                leaving = a;
            }
        }

        for (int a : minus_arcs) basis_[a].flow = std::max(basis_[a].flow - theta, 0.0);
        for (int a : plus_arcs) basis_[a].flow += theta;

        is_basic_[idx(basis_[leaving].i, basis_[leaving].j)] = 0;
        is_basic_[idx(ei, ej)] = 1;
        basis_[leaving] = {ei, ej, theta};
    }

    int m_, n_;
    std::vector<double> supply_, demand_, cost_;
    std::vector<BasicArc> basis_;
    std::vector<std::uint8_t> is_basic_;
    std::vector<double> u_, v_;
    std::vector<std::vector<int>> row_arcs_, col_arcs_;
};

} // namespace

double emd(const DensityMap& p, const DensityMap& q, const MetricConfig& cfg) {
    if (!p.same_shape(q))
        throw ShapeMismatch("emd needs same-shape maps");
    cfg.validate();
    if (p.sum() <= 0.0) throw ZeroMass("emd prediction has no mass");
    if (q.sum() <= 0.0) throw ZeroMass("emd ground truth has no mass");

    const DensityMap pd = normalize_sum(box_downsample(p, cfg.emd_downsample));
    const DensityMap qd = normalize_sum(box_downsample(q, cfg.emd_downsample));
    const std::vector<Bin> src = nonzero_bins(pd);
    const std::vector<Bin> dst = nonzero_bins(qd);

    const auto dist = [](const Bin& a, const Bin& b) {
        return std::hypot(a.x - b.x, a.y - b.y);
    };

    if (src.size() == 1) {
        double total = 0.0;
        for (const auto& b : dst) total += b.mass * dist(src[0], b);
        return total;
    }
    if (dst.size() == 1) {
        double total = 0.0;
        for (const auto& b : src) total += b.mass * dist(b, dst[0]);
        return total;
    }

    std::vector<double> supply(src.size()), demand(dst.size());
    for (std::size_t i = 0; i < src.size(); ++i) supply[i] = src[i].mass;
    for (std::size_t j = 0; j < dst.size(); ++j) demand[j] = dst[j].mass;
    std::vector<double> cost(src.size() * dst.size());
    for (std::size_t i = 0; i < src.size(); ++i)
        for (std::size_t j = 0; j < dst.size(); ++j)
            cost[i * dst.size() + j] = dist(src[i], dst[j]);

    return TransportSimplex(std::move(supply), std::move(demand), std::move(cost)).solve();
}

} // namespace eml::metrics
