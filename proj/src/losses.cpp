#include "eml/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "eml/simd.hpp"

namespace eml::losses {
namespace {

void require_same_shape(int wa, int ha, int wb, int hb, const char* what) {
    if (wa != wb || ha != hb)
        throw ShapeMismatch(std::string(what) + ": " + std::to_string(wa) + "x" +
                            std::to_string(ha) + " vs " + std::to_string(wb) + "x" +
                            std::to_string(hb));
}

struct Moments {
    double mean;
    double var;     // population
    double stdev;   // sqrt(var), not floored
    double sigma;   // max(stdev, kSigmaFloor)
    bool floored;   // sigma came from the floor; treat it as constant in grads
};

Moments moments(const double* x, std::size_t n) {
    const auto& k = simd::active_kernels();
    Moments m;
    m.mean = k.sum(x, n) / double(n);
    m.var = k.centered_sq_sum(x, m.mean, n) / double(n);
    m.stdev = std::sqrt(m.var);
    m.floored = m.stdev < kSigmaFloor;
    m.sigma = m.floored ? kSigmaFloor : m.stdev;
    return m;
}

} // namespace

LossValueGrad cc_prime(const DensityMap& p, const DensityMap& q) {
    require_same_shape(p.width(), p.height(), q.width(), q.height(), "cc_prime");
    const auto& k = simd::active_kernels();
    const std::size_t n = p.size();
    const Moments mp = moments(p.data(), n);
    const Moments mq = moments(q.data(), n);
    if (mq.stdev <= 0.0)
        throw DegenerateInput("cc_prime: constant ground-truth map");

    const double cov = k.centered_dot(p.data(), mp.mean, q.data(), mq.mean, n) / double(n);
    const double corr = cov / (mp.sigma * mq.stdev);

    LossValueGrad out;
    out.value = 1.0 - std::clamp(corr, -1.0, 1.0);
    out.grad = Grid(p.width(), p.height());
    // d corr / dP_i = [(Q_i - muQ)/n - cov*(P_i - muP)/(n*sigmaP^2)] / (sigmaP*sigmaQ);
    // the second term vanishes when sigmaP is pinned at the floor.
    const double a = 1.0 / (double(n) * mp.sigma * mq.stdev);
    const double b = mp.floored ? 0.0 : cov / (mp.sigma * mp.sigma);
    for (std::size_t i = 0; i < n; ++i) {
        const double dq = q.values()[i] - mq.mean;
        const double dp = p.values()[i] - mp.mean;
        out.grad.values()[i] = -a * (dq - b * dp);
    }
    return out;
}

LossValueGrad nss_prime(const DensityMap& p, const FixationMap& f) {
    require_same_shape(p.width(), p.height(), f.width(), f.height(), "nss_prime");
    const std::size_t n = p.size();
    const std::size_t n_fix = f.count();
    if (n_fix == 0) throw EmptyFixations("nss_prime needs at least one fixation");

    // Standardize F (ground truth; strict) and P (prediction; floored).
    // F is 0/1, so its population variance is mf*(1-mf) exactly.
    const double mf = double(n_fix) / double(n);
    const double vf = mf * (1.0 - mf);
    const double sf = std::sqrt(vf);
    if (sf <= 0.0) throw DegenerateInput("nss_prime: constant fixation map");

    const Moments mp = moments(p.data(), n);

    double value = 0.0;
    double fix_pbar_sum = 0.0; // sum of Pbar over fixated pixels
    for (std::size_t i = 0; i < n; ++i) {
        if (!f.values()[i]) continue;
        const double rbar = (1.0 - mf) / sf;
        const double pbar = (p.values()[i] - mp.mean) / mp.sigma;
        value += rbar - pbar;
        fix_pbar_sum += pbar;
    }
    value /= double(n_fix);

    LossValueGrad out;
    out.value = value;
    out.grad = Grid(p.width(), p.height());
    // d value / dP_j = -(1/(N*sigmaP)) * (F_j - N/n - Pbar_j * sum_fix(Pbar)/n),
    // dropping the Pbar term when sigmaP is pinned at the floor.
    const double a = -1.0 / (double(n_fix) * mp.sigma);
    const double mean_term = double(n_fix) / double(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double pbar = (p.values()[i] - mp.mean) / mp.sigma;
        const double curve = mp.floored ? 0.0 : pbar * fix_pbar_sum / double(n);
        out.grad.values()[i] = a * (double(f.values()[i]) - mean_term - curve);
    }
    return out;
}

LossValueGrad kld_loss(const DensityMap& p, const DensityMap& q, double eps) {
    require_same_shape(p.width(), p.height(), q.width(), q.height(), "kld_loss");
    const std::size_t n = p.size();
    const double total = p.sum();
    if (total <= 0.0) throw ZeroMass("kld_loss: prediction has no mass");
    const DensityMap qn = normalize_sum(q);

    const double inv_total = 1.0 / total;
    double value = 0.0;
    // h_i = Q_i * d/dPhat_i log(eps + Q_i/(Phat_i+eps))
    std::vector<double> h(n, 0.0);
    double h_dot_phat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double qi = qn.values()[i];
        if (qi == 0.0) continue;
        const double phat = p.values()[i] * inv_total;
        const double denom = phat + eps;
        const double ratio = qi / denom;
        value += qi * std::log(eps + ratio);
        h[i] = -qi * ratio / (denom * (eps + ratio));
        h_dot_phat += h[i] * phat;
    }

    LossValueGrad out;
    out.value = value;
    out.grad = Grid(p.width(), p.height());
    // Chain through the normalization: dPhat_i/dP_j = (delta_ij - Phat_i)/S.
    for (std::size_t i = 0; i < n; ++i)
        out.grad.values()[i] = (h[i] - h_dot_phat) * inv_total;
    return out;
}

namespace {

// Re-throws the in-flight exception with the component name prepended,
// preserving the concrete error type.
[[noreturn]] void rethrow_tagged(const char* component) {
    const auto tag = [component](const Error& e) {
        return std::string(component) + ": " + e.what();
    };
    try {
        throw;
    } catch (const ShapeMismatch& e) {
        throw ShapeMismatch(tag(e));
    } catch (const ZeroMass& e) {
        throw ZeroMass(tag(e));
    } catch (const DegenerateInput& e) {
        throw DegenerateInput(tag(e));
    } catch (const EmptyFixations& e) {
        throw EmptyFixations(tag(e));
    } catch (const Error& e) {
        throw Error(tag(e));
    }
}

} // namespace

LossValueGrad combined_loss(const DensityMap& p, const DensityMap& q,
                            const FixationMap& f, double eps) {
    LossValueGrad nss_part, cc_part, kld_part;
    try {
        nss_part = nss_prime(p, f);
    } catch (const Error&) {
        rethrow_tagged("nss_prime");
    }
    try {
        cc_part = cc_prime(p, q);
    } catch (const Error&) {
        rethrow_tagged("cc_prime");
    }
    try {
        kld_part = kld_loss(p, q, eps);
    } catch (const Error&) {
        rethrow_tagged("kld_loss");
    }

    LossValueGrad out;
    out.value = nss_part.value + cc_part.value + kld_part.value;
    out.grad = Grid(p.width(), p.height());
    for (std::size_t i = 0; i < p.size(); ++i)
        out.grad.values()[i] = nss_part.grad.values()[i] + cc_part.grad.values()[i] +
                               kld_part.grad.values()[i];
    return out;
}

} // namespace eml::losses
