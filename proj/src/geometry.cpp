#include "prolap/geometry.hpp"

#include <cmath>
#include <sstream>

namespace prolap {

DiagGaussian::DiagGaussian(Vec mu_in, Vec log_var_in)
    : mu(std::move(mu_in)), log_var(std::move(log_var_in)) {
    if (mu.empty() || mu.size() != log_var.size()) {
        throw std::invalid_argument("DiagGaussian: mu and log_var must have equal length >= 1");
    }
    if (!all_finite(mu) || !all_finite(log_var)) {
        throw std::invalid_argument("DiagGaussian: non-finite entry");
    }
}

double DiagGaussian::total_variance() const {
    double s = 0.0;
    for (double lv : log_var) s += std::exp(lv);
    return s;
}

static void check_same_dim(const DiagGaussian& a, const DiagGaussian& b,
                           const char* where) {
    if (a.dim() != b.dim()) {
        std::ostringstream os;
        os << where << ": dimension mismatch (" << a.dim() << " vs " << b.dim() << ")";
        throw std::invalid_argument(os.str());
    }
}

double csd_similarity(const DiagGaussian& a, const DiagGaussian& t) {
    check_same_dim(a, t, "csd_similarity");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        s += a.mu[i] * t.mu[i];
        s -= 0.5 * (std::exp(a.log_var[i]) + std::exp(t.log_var[i]));
    }
    return s;
}

double csd_similarity_grad(const DiagGaussian& a, const DiagGaussian& t,
                           double weight, GaussGrad& da, GaussGrad& dt) {
    check_same_dim(a, t, "csd_similarity");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double va = std::exp(a.log_var[i]);
        const double vt = std::exp(t.log_var[i]);
        s += a.mu[i] * t.mu[i] - 0.5 * (va + vt);
        da.d_mu[i] += weight * t.mu[i];
        dt.d_mu[i] += weight * a.mu[i];
        // d(sim)/d(log_var) = -1/2 exp(log_var)
        da.d_log_var[i] += weight * (-0.5 * va);
        dt.d_log_var[i] += weight * (-0.5 * vt);
    }
    return s;
}

namespace {

// Per-dimension variance with the optional training floor applied.
// Returns the variance actually used and whether the floor clipped it.
inline double floored_variance(double log_var, VarianceFloor* floor,
                               bool* clipped) {
    double v = std::exp(log_var);
    *clipped = false;
    if (floor != nullptr && v < floor->floor) {
        v = floor->floor;
        floor->hits += 1;
        *clipped = true;
    }
    if (v <= 0.0) {
        throw NumericError("inclusion_score: variance underflowed to zero");
    }
    return v;
}

}  // namespace

double inclusion_score(const DiagGaussian& z1, const DiagGaussian& z2,
                       VarianceFloor* floor) {
    check_same_dim(z1, z2, "inclusion_score");
    double h = 0.0;
    for (std::size_t i = 0; i < z1.dim(); ++i) {
        bool c1 = false, c2 = false;
        const double s1 = floored_variance(z1.log_var[i], floor, &c1);
        const double s2 = floored_variance(z2.log_var[i], floor, &c2);
        const double l1 = std::log(s1);
        const double l2 = std::log(s2);
        // log(2 s1 + s2) and log(2 s2 + s1) via log-sum-exp
        const double la = log_add_exp(kLn2 + l1, l2);
        const double lb = log_add_exp(kLn2 + l2, l1);
        const double diff = z1.mu[i] - z2.mu[i];
        h += 0.5 * (l2 - l1) + 0.5 * (la - lb) +
             diff * diff * (std::exp(-la) - std::exp(-lb));
    }
    return h;
}

double inclusion_score_grad(const DiagGaussian& z1, const DiagGaussian& z2,
                            double weight, GaussGrad& d1, GaussGrad& d2,
                            VarianceFloor* floor) {
    check_same_dim(z1, z2, "inclusion_score");
    double h = 0.0;
    for (std::size_t i = 0; i < z1.dim(); ++i) {
        bool c1 = false, c2 = false;
        const double s1 = floored_variance(z1.log_var[i], floor, &c1);
        const double s2 = floored_variance(z2.log_var[i], floor, &c2);
        const double l1 = std::log(s1);
        const double l2 = std::log(s2);
        const double la = log_add_exp(kLn2 + l1, l2);
        const double lb = log_add_exp(kLn2 + l2, l1);
        const double inv_a = std::exp(-la);  // 1 / (2 s1 + s2)
        const double inv_b = std::exp(-lb);  // 1 / (2 s2 + s1)
        const double diff = z1.mu[i] - z2.mu[i];
        const double dd = diff * diff;

        h += 0.5 * (l2 - l1) + 0.5 * (la - lb) + dd * (inv_a - inv_b);

        const double dmu1 = 2.0 * diff * (inv_a - inv_b);
        d1.d_mu[i] += weight * dmu1;
        d2.d_mu[i] += weight * (-dmu1);

        // dH/d(log_var) = sigma^2 * dH/d(sigma^2); zero when the floor clips.
        if (!c1) {
            const double dh_ds1 = -0.5 / s1 + 0.5 * (2.0 * inv_a - inv_b) +
                                  dd * (-2.0 * inv_a * inv_a + inv_b * inv_b);
            d1.d_log_var[i] += weight * s1 * dh_ds1;
        }
        if (!c2) {
            const double dh_ds2 = 0.5 / s2 + 0.5 * (inv_a - 2.0 * inv_b) +
                                  dd * (-inv_a * inv_a + 2.0 * inv_b * inv_b);
            d2.d_log_var[i] += weight * s2 * dh_ds2;
        }
    }
    return h;
}

namespace {

// ----- quadrature oracle internals -----

struct PowerIntegrand {
    // g(x) = a log N(x; m1, s1) + b log N(x; m2, s2)
    double m1, s1, m2, s2;
    double a, b;

    double log_density(double x) const {
        const double q1 = (x - m1) * (x - m1) / s1;
        const double q2 = (x - m2) * (x - m2) / s2;
        const double ln2pi = std::log(2.0 * kPi);
        return a * (-0.5 * (ln2pi + std::log(s1)) - 0.5 * q1) +
               b * (-0.5 * (ln2pi + std::log(s2)) - 0.5 * q2);
    }
};

struct SimpsonState {
    const PowerIntegrand* f;
    double shift;        // integrand is exp(g(x) - shift)
    int evals = 0;
    int max_depth = 60;
};

double shifted(const SimpsonState& st, double x) {
    return std::exp(st.f->log_density(x) - st.shift);
}

// Classic adaptive Simpson with Richardson correction.
double adaptive_simpson(SimpsonState& st, double a, double b, double fa,
                        double fm, double fb, double whole, double tol,
                        int depth) {
    if (depth > st.max_depth) {
        throw NumericError(
            "quadrature_inclusion_oracle: adaptive Simpson exceeded max depth "
            "(interval [" + std::to_string(a) + ", " + std::to_string(b) + "])");
    }
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = shifted(st, lm);
    const double frm = shifted(st, rm);
    st.evals += 2;
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::fabs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return adaptive_simpson(st, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
           adaptive_simpson(st, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

double integrate_piece(SimpsonState& st, double a, double b, double tol) {
    const double fa = shifted(st, a);
    const double fb = shifted(st, b);
    const double m = 0.5 * (a + b);
    const double fm = shifted(st, m);
    st.evals += 3;
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(st, a, b, fa, fm, fb, whole, tol, 0);
}

// log of integral over R of p1^a p2^b for 1-D Gaussians, by quadrature of
// the max-shifted integrand. The shifted integrand is a single smooth bump
// (g is quadratic in x), so the scan below cannot miss its support.
double log_power_integral_quadrature(double m1, double s1, double m2,
                                     double s2, double a, double b) {
    PowerIntegrand f{m1, s1, m2, s2, a, b};

    const double sd1 = std::sqrt(s1);
    const double sd2 = std::sqrt(s2);
    const double lo = std::fmin(m1 - 12.0 * sd1, m2 - 12.0 * sd2);
    const double hi = std::fmax(m1 + 12.0 * sd1, m2 + 12.0 * sd2);

    // Locate the mode of g by a dense scan, then refine by ternary search.
    const int kScan = 512;
    double best_x = lo, best_g = f.log_density(lo);
    for (int i = 1; i <= kScan; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / kScan;
        const double g = f.log_density(x);
        if (g > best_g) {
            best_g = g;
            best_x = x;
        }
    }
    double tlo = std::fmax(lo, best_x - (hi - lo) / kScan);
    double thi = std::fmin(hi, best_x + (hi - lo) / kScan);
    for (int it = 0; it < 200; ++it) {
        const double x1 = tlo + (thi - tlo) / 3.0;
        const double x2 = thi - (thi - tlo) / 3.0;
        if (f.log_density(x1) < f.log_density(x2)) {
            tlo = x1;
        } else {
            thi = x2;
        }
    }
    const double mode = 0.5 * (tlo + thi);
    const double gmax = f.log_density(mode);

    // Shrink the integration window to where the shifted integrand is above
    // exp(-90); the bump is unimodal so bisection on each side is valid.
    auto find_edge = [&](double inside, double outside) {
        double gi = f.log_density(outside) - gmax;
        if (gi > -90.0) return outside;  // window edge still significant
        double x_in = inside, x_out = outside;
        for (int it = 0; it < 200; ++it) {
            const double m = 0.5 * (x_in + x_out);
            if (f.log_density(m) - gmax > -90.0) {
                x_in = m;
            } else {
                x_out = m;
            }
        }
        return x_out;
    };
    const double left = find_edge(mode, lo);
    const double right = find_edge(mode, hi);

    SimpsonState st{&f, gmax};
    const double tol = 1e-13;
    const double integral =
        integrate_piece(st, left, mode, tol) + integrate_piece(st, mode, right, tol);
    if (!(integral > 0.0) || !std::isfinite(integral)) {
        throw NumericError("quadrature_inclusion_oracle: integral not positive/finite");
    }
    return gmax + std::log(integral);
}

}  // namespace

double quadrature_inclusion_oracle(const DiagGaussian& z1,
                                   const DiagGaussian& z2) {
    check_same_dim(z1, z2, "quadrature_inclusion_oracle");
    if (z1.dim() > 8) {
        throw std::invalid_argument("quadrature_inclusion_oracle: d > 8");
    }
    double log_i21 = 0.0;  // log integral of p1^2 p2
    double log_i12 = 0.0;  // log integral of p1 p2^2
    for (std::size_t i = 0; i < z1.dim(); ++i) {
        const double s1 = std::exp(z1.log_var[i]);
        const double s2 = std::exp(z2.log_var[i]);
        if (!(s1 > 0.0) || !(s2 > 0.0)) {
            throw std::invalid_argument("quadrature_inclusion_oracle: variance must be positive");
        }
        log_i21 += log_power_integral_quadrature(z1.mu[i], s1, z2.mu[i], s2, 2.0, 1.0);
        log_i12 += log_power_integral_quadrature(z1.mu[i], s1, z2.mu[i], s2, 1.0, 2.0);
    }
    return log_i21 - log_i12;
}

double kl_to_standard(const DiagGaussian& z) {
    double kl = 0.0;
    for (std::size_t i = 0; i < z.dim(); ++i) {
        const double v = std::exp(z.log_var[i]);
        kl += 0.5 * (v + z.mu[i] * z.mu[i] - 1.0 - z.log_var[i]);
    }
    return kl;
}

double kl_to_standard_grad(const DiagGaussian& z, double weight, GaussGrad& dz) {
    double kl = 0.0;
    for (std::size_t i = 0; i < z.dim(); ++i) {
        const double v = std::exp(z.log_var[i]);
        kl += 0.5 * (v + z.mu[i] * z.mu[i] - 1.0 - z.log_var[i]);
        dz.d_mu[i] += weight * z.mu[i];
        dz.d_log_var[i] += weight * 0.5 * (v - 1.0);
    }
    return kl;
}

}  // namespace prolap
