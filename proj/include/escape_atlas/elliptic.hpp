#ifndef ESCAPE_ATLAS_ELLIPTIC_HPP
#define ESCAPE_ATLAS_ELLIPTIC_HPP

// Complete/incomplete elliptic integrals and Jacobi elliptic functions.
//
// Every function here takes the elliptic MODULUS k, never the parameter
// m = k^2 used by SciPy, Mathematica and std::comp_ellint_1's cousins in
// other libraries. Use Modulus::from_parameter() when m is what you have.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace escape_atlas {

/// Moduli at or above 1 - kSingularGuard are rejected by K, F and sn/cn/dn.
inline constexpr double kSingularGuard = 1e-12;

namespace detail {
inline constexpr int kAgmMaxIterations = 64;
inline constexpr double kAgmTolerance = 1e-16;
}  // namespace detail

/// Elliptic modulus k in [0, 1] together with its complement k' = sqrt(1 - k^2).
///
/// Callers that can form k' without cancellation (e.g. near k -> 1) should use
/// with_complement() so the complement keeps full relative precision.
class Modulus {
 public:
  explicit Modulus(double k) : k_(k), kp_(0.0) {
    check(k);
    kp_ = std::sqrt((1.0 - k) * (1.0 + k));
  }

  static Modulus with_complement(double k, double kp) {
    check(k);
    if (!(kp >= 0.0 && kp <= 1.0)) {
      throw std::domain_error("complementary modulus outside [0, 1]: " + std::to_string(kp));
    }
    Modulus m(k);
    m.kp_ = kp;
    return m;
  }

  /// Builds the modulus from the parameter m = k^2.
  static Modulus from_parameter(double m) {
    if (!(m >= 0.0 && m <= 1.0)) {
      throw std::domain_error("elliptic parameter outside [0, 1]: " + std::to_string(m));
    }
    return with_complement(std::sqrt(m), std::sqrt(1.0 - m));
  }

  double k() const { return k_; }
  double complement() const { return kp_; }

 private:
  static void check(double k) {
    if (!(k >= 0.0 && k <= 1.0)) {
      throw std::domain_error("elliptic modulus outside [0, 1]: " + std::to_string(k));
    }
  }

  double k_;
  double kp_;
};

namespace detail {

inline void require_regular(const Modulus& m, const char* what) {
  if (m.k() >= 1.0 - kSingularGuard) {
    throw std::domain_error(std::string(what) + ": modulus k = " + std::to_string(m.k()) +
                            " is at the singular edge (k >= 1 - 1e-12); "
                            "was the parameter m = k^2 passed instead of k?");
  }
}

inline double agm(double a, double b) {
  for (int i = 0; i < kAgmMaxIterations && std::abs(a - b) > kAgmTolerance * a; ++i) {
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Complete elliptic integral of the first kind K(k).
inline double ellint_K(const Modulus& m) {
  detail::require_regular(m, "ellint_K");
  return std::numbers::pi / (2.0 * detail::agm(1.0, m.complement()));
}

inline double ellint_K(double k) { return ellint_K(Modulus(k)); }

/// K(k') evaluated as pi / (2 AGM(1, k)); finite for k in (0, 1], +inf at k = 0.
inline double ellint_Kp(const Modulus& m) {
  if (m.k() == 0.0) return std::numeric_limits<double>::infinity();
  return std::numbers::pi / (2.0 * detail::agm(1.0, m.k()));
}

/// Complete elliptic integral of the second kind E(k), k in [0, 1].
inline double ellint_E(const Modulus& m) {
  const double kp = m.complement();
  if (kp == 0.0) return 1.0;
  if (m.k() >= 1.0 - kSingularGuard) {
    // E(k) = 1 + k'^2/2 (ln(4/k') - 1/2) + O(k'^4 ln k')
    const double kp2 = kp * kp;
    return 1.0 + 0.5 * kp2 * (std::log(4.0 / kp) - 0.5);
  }
  double a = 1.0;
  double b = kp;
  double c = m.k();
  double weight = 0.5;
  double sum = weight * c * c;
  for (int i = 0; i < detail::kAgmMaxIterations && std::abs(c) > detail::kAgmTolerance * a; ++i) {
    c = 0.5 * (a - b);
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
    weight *= 2.0;
    sum += weight * c * c;
  }
  return std::numbers::pi / (2.0 * a) * (1.0 - sum);
}

inline double ellint_E(double k) { return ellint_E(Modulus(k)); }

/// Incomplete elliptic integral of the first kind F(phi, k) for any real phi,
/// using F(phi + n pi) = F(phi) + 2 n K.
inline double ellint_F(double phi, const Modulus& m) {
  detail::require_regular(m, "ellint_F");
  const double n = std::nearbyint(phi / std::numbers::pi);
  const double r = phi - n * std::numbers::pi;  // r in [-pi/2, pi/2]
  double periods = 0.0;
  if (n != 0.0) periods = 2.0 * n * ellint_K(m);
  if (m.k() == 0.0) return periods + r;

  // Descending Landen / AGM phase recursion: tan(phi_{j+1} - phi_j) = (b_j/a_j) tan(phi_j).
  double a = 1.0;
  double b = m.complement();
  double ph = r;
  double scale = 1.0;
  for (int i = 0; i < detail::kAgmMaxIterations && std::abs(a - b) > detail::kAgmTolerance * a; ++i) {
    double d = std::atan((b / a) * std::tan(ph));
    d += std::numbers::pi * std::nearbyint((ph - d) / std::numbers::pi);
    ph += d;
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
    scale *= 2.0;
  }
  return periods + ph / (scale * a);
}

inline double ellint_F(double phi, double k) { return ellint_F(phi, Modulus(k)); }

struct JacobiSnCnDn {
  double sn;
  double cn;
  double dn;
};

/// Jacobi sn, cn, dn at argument u, computed together by the descending AGM.
inline JacobiSnCnDn jacobi_sn_cn_dn(double u, const Modulus& m) {
  detail::require_regular(m, "jacobi_sn_cn_dn");
  const double k = m.k();
  const double kp = m.complement();
  if (k == 0.0) return {std::sin(u), std::cos(u), 1.0};

  // Reduce u into [-2K, 2K]; all three functions are 4K periodic.
  const double K = ellint_K(m);
  const double period = 4.0 * K;
  u -= period * std::nearbyint(u / period);

  double a[detail::kAgmMaxIterations + 1];
  double c[detail::kAgmMaxIterations + 1];
  a[0] = 1.0;
  c[0] = k;
  double b = kp;
  int n = 0;
  while (n < detail::kAgmMaxIterations && std::abs(c[n]) > detail::kAgmTolerance * a[n]) {
    a[n + 1] = 0.5 * (a[n] + b);
    c[n + 1] = 0.5 * (a[n] - b);
    b = std::sqrt(a[n] * b);
    ++n;
  }
  double phi = std::ldexp(a[n] * u, n);
  for (int j = n; j > 0; --j) {
    phi = 0.5 * (phi + std::asin(c[j] / a[j] * std::sin(phi)));
  }
  const double sn = std::sin(phi);
  const double cn = std::cos(phi);
  // 1 - k^2 sn^2 = k'^2 + k^2 cn^2, a sum of non-negative terms.
  const double dn = std::sqrt(kp * kp + k * k * cn * cn);
  return {sn, cn, dn};
}

inline JacobiSnCnDn jacobi_sn_cn_dn(double u, double k) { return jacobi_sn_cn_dn(u, Modulus(k)); }

/// Jacobi nome q = exp(-pi K'/K).
inline double nome(const Modulus& m) {
  if (m.k() == 0.0) return 0.0;
  return std::exp(-std::numbers::pi * ellint_Kp(m) / ellint_K(m));
}

}  // namespace escape_atlas

#endif  // ESCAPE_ATLAS_ELLIPTIC_HPP
