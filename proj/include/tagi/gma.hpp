#pragma once

#include <array>
#include <stdexcept>

namespace tagi::gma {

// First two moments of a scalar Gaussian.
struct Gaussian {
    double mean = 0.0;
    double var = 0.0;
};

// Two jointly Gaussian scalars with their covariance.
struct GaussianPair {
    Gaussian x1;
    Gaussian x2;
    double cov = 0.0;
};

// Four jointly Gaussian scalars: means plus the full symmetric covariance.
struct GaussianQuad {
    std::array<double, 4> mean{};
    std::array<std::array<double, 4>, 4> cov{};
};

enum class ActivationKind { identity, relu, tanh };

// Moments tracked for phi(Z) under local linearization at E[Z], plus the
// moments of the local derivative phi'(Z) used for derivative propagation.
struct ActivationMoments {
    double a_mean = 0.0;     // E[phi(Z)]
    double a_var = 0.0;      // var[phi(Z)]
    double jacobian = 0.0;   // phi'(E[Z]), the linearization slope
    double dphi_mean = 0.0;  // E[phi'(Z)]
    double dphi_var = 0.0;   // var[phi'(Z)]
};

// Covariances tying a Tanh unit's local derivative phi'(Z_up) to quantities
// one step below it, plus the unit-local cov(phi'(Z_low), Z_low).
struct DerivCovariances {
    double with_weight = 0.0;      // cov(phi'(Z_up), W), W the weight feeding Z_up
    double with_lower_dphi = 0.0;  // cov(phi'(Z_up), phi'(Z_low))
    double with_lower_z = 0.0;     // cov(phi'(Z_up), Z_low)
    double own_z = 0.0;            // cov(phi'(Z_low), Z_low)
};

namespace detail {
inline void check_pair(const GaussianPair& p) {
    if (p.x1.var < 0.0 || p.x2.var < 0.0) {
        throw std::invalid_argument("gma: negative variance in Gaussian pair");
    }
    const double bound = p.x1.var * p.x2.var;
    if (p.cov * p.cov > bound * (1.0 + 1e-9) + 1e-300) {
        throw std::invalid_argument("gma: pair covariance exceeds variance bound");
    }
}
}  // namespace detail

// E[X1 X2] for a jointly Gaussian pair.
inline double product_mean(const GaussianPair& p) {
    detail::check_pair(p);
    return p.x1.mean * p.x2.mean + p.cov;
}

// var(X1 X2) for a jointly Gaussian pair.
inline double product_var(const GaussianPair& p) {
    detail::check_pair(p);
    return p.x1.var * p.x2.var + p.cov * p.cov + 2.0 * p.cov * p.x1.mean * p.x2.mean +
           p.x1.var * p.x2.mean * p.x2.mean + p.x2.var * p.x1.mean * p.x1.mean;
}

// cov(X1 X2, X3) given cov(X1, X3) and cov(X2, X3), all jointly Gaussian.
inline double cov_with_product(const GaussianPair& p, double cov_x1_x3, double cov_x2_x3) {
    detail::check_pair(p);
    return cov_x1_x3 * p.x2.mean + cov_x2_x3 * p.x1.mean;
}

// cov(X1 X2, X3 X4) for four jointly Gaussian scalars. Throws if the supplied
// covariance matrix is asymmetric or not positive semi-definite.
double cov_product_product(const GaussianQuad& q);

// Moments of phi(Z) and phi'(Z) for Z ~ N(mean, var) under local
// linearization of phi at the mean.
ActivationMoments activation_moments(const Gaussian& z, ActivationKind kind);

// cov(phi'(Z), Z) for a single unit; zero unless the activation is Tanh.
double dphi_z_cov(const Gaussian& z, const ActivationMoments& m, ActivationKind kind);

// Covariances of the local derivative of an upper Tanh unit with the weight,
// derivative, and pre-activation one step below. `w` is the weight connecting
// the lower unit's activation to the upper unit's pre-activation. All entries
// involving phi'(Z_up) are zero unless `up_kind` is Tanh; `with_lower_dphi`
// additionally requires the lower unit to be Tanh.
DerivCovariances tanh_deriv_covariances(const Gaussian& z_up, const ActivationMoments& up,
                                        ActivationKind up_kind, const Gaussian& w,
                                        const Gaussian& z_low, const ActivationMoments& low,
                                        ActivationKind low_kind);

}  // namespace tagi::gma
