#ifndef EML_LOSSES_HPP
#define EML_LOSSES_HPP

#include "eml/grid.hpp"

namespace eml::losses {

// Floor applied to sigma(P) inside the loss denominators so an (almost)
// constant prediction mid-training yields a large finite loss instead of
// blowing up. Ground-truth degeneracy (constant Q, constant F) still
// raises DegenerateInput, and the reporting metrics keep strict errors.
inline constexpr double kSigmaFloor = 1e-8;

struct LossValueGrad {
    double value = 0.0;
    Grid grad; // d(loss)/dP_i, prediction's shape
};

// 1 - cov(P,Q) / (sigma(P) * sigma(Q)), in [0, 2].
LossValueGrad cc_prime(const DensityMap& p, const DensityMap& q);

// (1/N) * sum_i (Rbar_i - Pbar_i) * F_i with Rbar standardizing F and
// Pbar standardizing P.
LossValueGrad nss_prime(const DensityMap& p, const FixationMap& f);

// KLD of Eq-1 form with P sum-normalized internally (the raw prediction
// enters unnormalized); the gradient runs through the normalization.
LossValueGrad kld_loss(const DensityMap& p, const DensityMap& q, double eps);

// nss_prime + cc_prime + kld_loss, summed in that order; component
// failures propagate tagged with the component name.
LossValueGrad combined_loss(const DensityMap& p, const DensityMap& q,
                            const FixationMap& f, double eps);

} // namespace eml::losses

#endif
