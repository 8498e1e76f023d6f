#include "tagi/gma.hpp"

#include <cmath>

namespace tagi::gma {

namespace {

// Eigenvalues of a symmetric 4x4 via cyclic Jacobi rotations. Small, robust,
// and plenty accurate for a positive semi-definiteness check.
std::array<double, 4> symmetric_eigenvalues(std::array<std::array<double, 4>, 4> a) {
    constexpr int n = 4;
    for (int sweep = 0; sweep < 32; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        }
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[k][p];
                    const double akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[p][k];
                    const double aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    return {a[0][0], a[1][1], a[2][2], a[3][3]};
}

}  // namespace

double cov_product_product(const GaussianQuad& q) {
    double scale = 1.0;
    for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) {
            if (std::abs(q.cov[i][j] - q.cov[j][i]) >
                1e-9 * (1.0 + std::abs(q.cov[i][j]) + std::abs(q.cov[j][i]))) {
                throw std::invalid_argument("gma: covariance matrix is not symmetric");
            }
        }
        scale = std::max(scale, std::abs(q.cov[i][i]));
    }
    const auto eig = symmetric_eigenvalues(q.cov);
    for (double lambda : eig) {
        if (lambda < -1e-9 * scale) {
            throw std::invalid_argument("gma: covariance matrix is not positive semi-definite");
        }
    }

    const auto& m = q.mean;
    const auto& c = q.cov;
    return c[0][2] * c[1][3] + c[0][3] * c[1][2] + c[0][2] * m[1] * m[3] +
           c[0][3] * m[1] * m[2] + c[1][2] * m[0] * m[3] + c[1][3] * m[0] * m[2];
}

ActivationMoments activation_moments(const Gaussian& z, ActivationKind kind) {
    if (z.var < 0.0) throw std::invalid_argument("gma: negative pre-activation variance");
    ActivationMoments m;
    switch (kind) {
        case ActivationKind::identity:
            m.a_mean = z.mean;
            m.a_var = z.var;
            m.jacobian = 1.0;
            m.dphi_mean = 1.0;
            m.dphi_var = 0.0;
            break;
        case ActivationKind::relu: {
            // Linearized at the mean: the gate is open iff E[Z] > 0 (ties closed).
            const double j = z.mean > 0.0 ? 1.0 : 0.0;
            m.jacobian = j;
            m.a_mean = j * z.mean;
            m.a_var = j * z.var;
            m.dphi_mean = j;
            m.dphi_var = 0.0;
            break;
        }
        case ActivationKind::tanh: {
            const double t = std::tanh(z.mean);
            const double j = 1.0 - t * t;
            m.jacobian = j;
            m.a_mean = t;
            m.a_var = j * j * z.var;
            // phi' = 1 - phi^2, with phi treated via its linearized moments.
            m.dphi_mean = 1.0 - (t * t + m.a_var);
            m.dphi_var = 2.0 * m.a_var * (m.a_var + 2.0 * t * t);
            break;
        }
    }
    return m;
}

double dphi_z_cov(const Gaussian& z, const ActivationMoments& m, ActivationKind kind) {
    if (kind != ActivationKind::tanh) return 0.0;
    return -2.0 * m.jacobian * z.var * m.a_mean;
}

DerivCovariances tanh_deriv_covariances(const Gaussian& z_up, const ActivationMoments& up,
                                        ActivationKind up_kind, const Gaussian& w,
                                        const Gaussian& z_low, const ActivationMoments& low,
                                        ActivationKind low_kind) {
    (void)z_up;
    DerivCovariances out;
    out.own_z = dphi_z_cov(z_low, low, low_kind);
    if (up_kind != ActivationKind::tanh) return out;

    out.with_weight = -2.0 * up.jacobian * w.var * low.a_mean * up.a_mean;
    out.with_lower_z = -2.0 * up.jacobian * low.jacobian * z_low.var * w.mean * up.a_mean;
    if (low_kind == ActivationKind::tanh) {
        const double c = up.jacobian * w.mean * low.a_var;
        out.with_lower_dphi = 2.0 * c * c + 4.0 * c * up.a_mean * low.a_mean;
    }
    return out;
}

}  // namespace tagi::gma
