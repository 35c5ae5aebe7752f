#ifndef ESCAPE_ATLAS_ODE_HPP
#define ESCAPE_ATLAS_ODE_HPP

/*
 * Dormand-Prince 8(5,3) embedded Runge-Kutta pair with 7th-order dense output
 * (Hairer, Norsett & Wanner, "Solving ODEs I", II.10). Fixed-size state.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace escape_atlas {

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepControl {
  double rtol = 1e-10;
  double atol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  double first_step = 0.0;  ///< 0 selects the initial step automatically
  long max_steps = 100'000'000;

  bool operator==(const StepControl&) const = default;
};

namespace dop853 {

inline constexpr int kStages = 12;

inline constexpr std::array<double, 16> C = {
    0.0,
    0.526001519587677318785587544488e-01,
    0.789002279381515978178381316732e-01,
    0.118350341907227396726757197510,
    0.281649658092772603273242802490,
    0.333333333333333333333333333333,
    0.25,
    0.307692307692307692307692307692,
    0.651282051282051282051282051282,
    0.6,
    0.857142857142857142857142857142,
    1.0,
    1.0,
    0.1,
    0.2,
    0.777777777777777777777777777778};

// Lower-triangular stage matrix, rows 1..15 (row 12 holds the 8th-order weights).
inline constexpr std::array<std::array<double, 16>, 16> A = [] {
  std::array<std::array<double, 16>, 16> a{};
  a[1][0] = 5.26001519587677318785587544488e-2;

  a[2][0] = 1.97250569845378994544595329183e-2;
  a[2][1] = 5.91751709536136983633785987549e-2;

  a[3][0] = 2.95875854768068491816892993775e-2;
  a[3][2] = 8.87627564304205475450678981324e-2;

  a[4][0] = 2.41365134159266685502369798665e-1;
  a[4][2] = -8.84549479328286085344864962717e-1;
  a[4][3] = 9.24834003261792003115737966543e-1;

  a[5][0] = 3.7037037037037037037037037037e-2;
  a[5][3] = 1.70828608729473871279604482173e-1;
  a[5][4] = 1.25467687566822425016691814123e-1;

  a[6][0] = 3.7109375e-2;
  a[6][3] = 1.70252211019544039314978060272e-1;
  a[6][4] = 6.02165389804559606850219397283e-2;
  a[6][5] = -1.7578125e-2;

  a[7][0] = 3.70920001185047927108779319836e-2;
  a[7][3] = 1.70383925712239993810214054705e-1;
  a[7][4] = 1.07262030446373284651809199168e-1;
  a[7][5] = -1.53194377486244017527936158236e-2;
  a[7][6] = 8.27378916381402288758473766002e-3;

  a[8][0] = 6.24110958716075717114429577812e-1;
  a[8][3] = -3.36089262944694129406857109825;
  a[8][4] = -8.68219346841726006818189891453e-1;
  a[8][5] = 2.75920996994467083049415600797e1;
  a[8][6] = 2.01540675504778934086186788979e1;
  a[8][7] = -4.34898841810699588477366255144e1;

  a[9][0] = 4.77662536438264365890433908527e-1;
  a[9][3] = -2.48811461997166764192642586468;
  a[9][4] = -5.90290826836842996371446475743e-1;
  a[9][5] = 2.12300514481811942347288949897e1;
  a[9][6] = 1.52792336328824235832596922938e1;
  a[9][7] = -3.32882109689848629194453265587e1;
  a[9][8] = -2.03312017085086261358222928593e-2;

  a[10][0] = -9.3714243008598732571704021658e-1;
  a[10][3] = 5.18637242884406370830023853209;
  a[10][4] = 1.09143734899672957818500254654;
  a[10][5] = -8.14978701074692612513997267357;
  a[10][6] = -1.85200656599969598641566180701e1;
  a[10][7] = 2.27394870993505042818970056734e1;
  a[10][8] = 2.49360555267965238987089396762;
  a[10][9] = -3.0467644718982195003823669022;

  a[11][0] = 2.27331014751653820792359768449;
  a[11][3] = -1.05344954667372501984066689879e1;
  a[11][4] = -2.00087205822486249909675718444;
  a[11][5] = -1.79589318631187989172765950534e1;
  a[11][6] = 2.79488845294199600508499808837e1;
  a[11][7] = -2.85899827713502369474065508674;
  a[11][8] = -8.87285693353062954433549289258;
  a[11][9] = 1.23605671757943030647266201528e1;
  a[11][10] = 6.43392746015763530355970484046e-1;

  a[12][0] = 5.42937341165687622380535766363e-2;
  a[12][5] = 4.45031289275240888144113950566;
  a[12][6] = 1.89151789931450038304281599044;
  a[12][7] = -5.8012039600105847814672114227;
  a[12][8] = 3.1116436695781989440891606237e-1;
  a[12][9] = -1.52160949662516078556178806805e-1;
  a[12][10] = 2.01365400804030348374776537501e-1;
  a[12][11] = 4.47106157277725905176885569043e-2;

  a[13][0] = 5.61675022830479523392909219681e-2;
  a[13][6] = 2.53500210216624811088794765333e-1;
  a[13][7] = -2.46239037470802489917441475441e-1;
  a[13][8] = -1.24191423263816360469010140626e-1;
  a[13][9] = 1.5329179827876569731206322685e-1;
  a[13][10] = 8.20105229563468988491666602057e-3;
  a[13][11] = 7.56789766054569976138603589584e-3;
  a[13][12] = -8.298e-3;

  a[14][0] = 3.18346481635021405060768473261e-2;
  a[14][5] = 2.83009096723667755288322961402e-2;
  a[14][6] = 5.35419883074385676223797384372e-2;
  a[14][7] = -5.49237485713909884646569340306e-2;
  a[14][10] = -1.08347328697249322858509316994e-4;
  a[14][11] = 3.82571090835658412954920192323e-4;
  a[14][12] = -3.40465008687404560802977114492e-4;
  a[14][13] = 1.41312443674632500278074618366e-1;

  a[15][0] = -4.28896301583791923408573538692e-1;
  a[15][5] = -4.69762141536116384314449447206;
  a[15][6] = 7.68342119606259904184240953878;
  a[15][7] = 4.06898981839711007970213554331;
  a[15][8] = 3.56727187455281109270669543021e-1;
  a[15][12] = -1.39902416515901462129418009734e-3;
  a[15][13] = 2.9475147891527723389556272149;
  a[15][14] = -9.15095847217987001081870187138;
  return a;
}();

// 5th- and 3rd-order error estimator weights (13 entries, last multiplies f(t+h)).
inline constexpr std::array<double, 13> E5 = {
    0.1312004499419488073250102996e-1, 0.0, 0.0, 0.0, 0.0,
    -0.1225156446376204440720569753e+1, -0.4957589496572501915214079952,
    0.1664377182454986536961530415e+1, -0.3503288487499736816886487290,
    0.3341791187130174790297318841, 0.8192320648511571246570742613e-1,
    -0.2235530786388629525884427845e-1, 0.0};

inline constexpr std::array<double, 13> E3 = [] {
  std::array<double, 13> e{};
  for (int i = 0; i < kStages; ++i) e[i] = A[12][i];
  e[0] -= 0.244094488188976377952755905512;
  e[8] -= 0.733846688281611857341361741547;
  e[11] -= 0.220588235294117647058823529412e-1;
  return e;
}();

inline constexpr std::array<std::array<double, 16>, 4> D = [] {
  std::array<std::array<double, 16>, 4> d{};
  d[0][0] = -0.84289382761090128651353491142e+1;
  d[0][5] = 0.56671495351937776962531783590;
  d[0][6] = -0.30689499459498916912797304727e+1;
  d[0][7] = 0.23846676565120698287728149680e+1;
  d[0][8] = 0.21170345824450282767155149946e+1;
  d[0][9] = -0.87139158377797299206789907490;
  d[0][10] = 0.22404374302607882758541771650e+1;
  d[0][11] = 0.63157877876946881815570249290;
  d[0][12] = -0.88990336451333310820698117400e-1;
  d[0][13] = 0.18148505520854727256656404962e+2;
  d[0][14] = -0.91946323924783554000451984436e+1;
  d[0][15] = -0.44360363875948939664310572000e+1;

  d[1][0] = 0.10427508642579134603413151009e+2;
  d[1][5] = 0.24228349177525818288430175319e+3;
  d[1][6] = 0.16520045171727028198505394887e+3;
  d[1][7] = -0.37454675472269020279518312152e+3;
  d[1][8] = -0.22113666853125306036270938578e+2;
  d[1][9] = 0.77334326684722638389603898808e+1;
  d[1][10] = -0.30674084731089398182061213626e+2;
  d[1][11] = -0.93321305264302278729567221706e+1;
  d[1][12] = 0.15697238121770843886131091075e+2;
  d[1][13] = -0.31139403219565177677282850411e+2;
  d[1][14] = -0.93529243588444783865713862664e+1;
  d[1][15] = 0.35816841486394083752465898540e+2;

  d[2][0] = 0.19985053242002433820987653617e+2;
  d[2][5] = -0.38703730874935176555105901742e+3;
  d[2][6] = -0.18917813819516756882830838328e+3;
  d[2][7] = 0.52780815920542364900561016686e+3;
  d[2][8] = -0.11573902539959630126141871134e+2;
  d[2][9] = 0.68812326946963000169666922661e+1;
  d[2][10] = -0.10006050966910838403183860980e+1;
  d[2][11] = 0.77771377980534432092869265740;
  d[2][12] = -0.27782057523535084065932004339e+1;
  d[2][13] = -0.60196695231264120758267380846e+2;
  d[2][14] = 0.84320405506677161018159903784e+2;
  d[2][15] = 0.11992291136182789328035130030e+2;

  d[3][0] = -0.25693933462703749003312586129e+2;
  d[3][5] = -0.15418974869023643374053993627e+3;
  d[3][6] = -0.23152937917604549567536039109e+3;
  d[3][7] = 0.35763911791061412378285349910e+3;
  d[3][8] = 0.93405324183624310003907691704e+2;
  d[3][9] = -0.37458323136451633156875139351e+2;
  d[3][10] = 0.10409964950896230045147246184e+3;
  d[3][11] = 0.29840293426660503123344363579e+2;
  d[3][12] = -0.43533456590011143754432175058e+2;
  d[3][13] = 0.96324553959188282948394950600e+2;
  d[3][14] = -0.39177261675615439165231486172e+2;
  d[3][15] = -0.14972683625798562581422125276e+3;
  return d;
}();

}  // namespace dop853

/// Adaptive DOP853 stepper over a fixed-size state.
///
/// `Rhs` is any callable `std::array<double, N>(double t, const std::array<double, N>&)`.
/// step() advances by one accepted step, never past `t_bound`; dense(t) evaluates
/// the continuous extension on the last accepted step.
template <std::size_t N, class Rhs>
class Dop853 {
 public:
  using State = std::array<double, N>;

  Dop853(Rhs rhs, double t0, const State& y0, double t_bound, StepControl control = {})
      : rhs_(std::move(rhs)), control_(control), t_(t0), y_(y0), t_bound_(t_bound) {
    if (!(control_.rtol > 0.0) || !(control_.atol >= 0.0)) {
      throw std::invalid_argument("Dop853: tolerances must be positive");
    }
    f_ = rhs_(t_, y_);
    h_ = control_.first_step > 0.0 ? control_.first_step : initial_step();
  }

  double t() const { return t_; }
  const State& y() const { return y_; }
  double t_old() const { return t_old_; }
  const State& y_old() const { return y_old_; }
  double last_step() const { return t_ - t_old_; }
  bool finished() const { return t_ >= t_bound_; }
  long steps() const { return accepted_; }

  /// Moves the end time; used to land exactly on sampling instants.
  void set_bound(double t_bound) { t_bound_ = t_bound; }

  /// Advances one accepted step. Throws IntegrationError on step-size underflow.
  void step() {
    const double min_step = 10.0 * std::abs(std::nextafter(t_, std::numeric_limits<double>::infinity()) - t_);
    double h = std::min(h_, control_.max_step);
    bool rejected = false;
    for (;;) {
      if (h < min_step) {
        throw IntegrationError("DOP853 step size underflow at t = " + std::to_string(t_));
      }
      double t_new = t_ + h;
      if (t_new > t_bound_) t_new = t_bound_;
      h = t_new - t_;

      State y_new;
      stages(h, y_new);
      const double err = error_norm(h, y_new);
      if (err < 1.0) {
        double factor = err == 0.0 ? kMaxFactor : std::min(kMaxFactor, kSafety * std::pow(err, -1.0 / 8.0));
        if (rejected) factor = std::min(1.0, factor);
        t_old_ = t_;
        y_old_ = y_;
        f_old_ = f_;
        t_ = t_new;
        y_ = y_new;
        f_ = k_[kStages];
        h_ = h * factor;
        dense_ready_ = false;
        if (++accepted_ > control_.max_steps) {
          throw IntegrationError("DOP853 exceeded the step budget at t = " + std::to_string(t_));
        }
        return;
      }
      h *= std::max(kMinFactor, kSafety * std::pow(err, -1.0 / 8.0));
      rejected = true;
    }
  }

  /// Continuous extension on [t_old, t].
  State dense(double t) {
    if (!dense_ready_) prepare_dense();
    const double h = t_ - t_old_;
    const double x = h == 0.0 ? 0.0 : (t - t_old_) / h;
    State out{};
    for (std::size_t n = 0; n < N; ++n) {
      double y = 0.0;
      for (int i = 6; i >= 0; --i) {
        y += coeffs_[i][n];
        y *= ((6 - i) % 2 == 0) ? x : (1.0 - x);
      }
      out[n] = y + y_old_[n];
    }
    return out;
  }

 private:
  static constexpr int kStages = dop853::kStages;
  static constexpr double kSafety = 0.9;
  static constexpr double kMinFactor = 0.2;
  static constexpr double kMaxFactor = 10.0;

  void stages(double h, State& y_new) {
    k_[0] = f_;
    for (int s = 1; s < kStages; ++s) {
      State ys = y_;
      for (int j = 0; j < s; ++j) {
        const double a = dop853::A[s][j];
        if (a == 0.0) continue;
        for (std::size_t n = 0; n < N; ++n) ys[n] += h * a * k_[j][n];
      }
      k_[s] = rhs_(t_ + dop853::C[s] * h, ys);
    }
    y_new = y_;
    for (int j = 0; j < kStages; ++j) {
      const double b = dop853::A[12][j];
      if (b == 0.0) continue;
      for (std::size_t n = 0; n < N; ++n) y_new[n] += h * b * k_[j][n];
    }
    k_[kStages] = rhs_(t_ + h, y_new);
  }

  double error_norm(double h, const State& y_new) const {
    double e5 = 0.0;
    double e3 = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double scale = control_.atol + std::max(std::abs(y_[n]), std::abs(y_new[n])) * control_.rtol;
      double s5 = 0.0;
      double s3 = 0.0;
      for (int j = 0; j <= kStages; ++j) {
        s5 += dop853::E5[j] * k_[j][n];
        s3 += dop853::E3[j] * k_[j][n];
      }
      e5 += (s5 / scale) * (s5 / scale);
      e3 += (s3 / scale) * (s3 / scale);
    }
    if (e5 == 0.0 && e3 == 0.0) return 0.0;
    const double denom = e5 + 0.01 * e3;
    return std::abs(h) * e5 / std::sqrt(denom * static_cast<double>(N));
  }

  void prepare_dense() {
    const double h = t_ - t_old_;
    // Stage derivatives of the accepted step are still in k_[0..12] (k_[12] = f(t)).
    for (int s = 13; s < 16; ++s) {
      State ys = y_old_;
      for (int j = 0; j < s; ++j) {
        const double a = dop853::A[s][j];
        if (a == 0.0) continue;
        for (std::size_t n = 0; n < N; ++n) ys[n] += h * a * k_[j][n];
      }
      k_[s] = rhs_(t_old_ + dop853::C[s] * h, ys);
    }
    for (std::size_t n = 0; n < N; ++n) {
      const double dy = y_[n] - y_old_[n];
      coeffs_[0][n] = dy;
      coeffs_[1][n] = h * f_old_[n] - dy;
      coeffs_[2][n] = 2.0 * dy - h * (f_[n] + f_old_[n]);
      for (int r = 0; r < 4; ++r) {
        double acc = 0.0;
        for (int j = 0; j < 16; ++j) acc += dop853::D[r][j] * k_[j][n];
        coeffs_[3 + r][n] = h * acc;
      }
    }
    dense_ready_ = true;
  }

  double initial_step() {
    // Hairer's starting-step heuristic.
    double d0 = 0.0;
    double d1 = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double sc = control_.atol + std::abs(y_[n]) * control_.rtol;
      d0 += (y_[n] / sc) * (y_[n] / sc);
      d1 += (f_[n] / sc) * (f_[n] / sc);
    }
    d0 = std::sqrt(d0 / N);
    d1 = std::sqrt(d1 / N);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, t_bound_ - t_);
    State y1;
    for (std::size_t n = 0; n < N; ++n) y1[n] = y_[n] + h0 * f_[n];
    const State f1 = rhs_(t_ + h0, y1);
    double d2 = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double sc = control_.atol + std::abs(y_[n]) * control_.rtol;
      d2 += ((f1[n] - f_[n]) / sc) * ((f1[n] - f_[n]) / sc);
    }
    d2 = std::sqrt(d2 / N) / h0;
    const double h1 = (d1 <= 1e-15 && d2 <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                   : std::pow(0.01 / std::max(d1, d2), 1.0 / 8.0);
    return std::min({100.0 * h0, h1, control_.max_step});
  }

  Rhs rhs_;
  StepControl control_;
  double t_;
  State y_;
  State f_{};
  double t_bound_;
  double h_ = 0.0;
  double t_old_ = 0.0;
  State y_old_{};
  State f_old_{};
  std::array<State, 16> k_{};
  std::array<State, 7> coeffs_{};
  bool dense_ready_ = false;
  long accepted_ = 0;
};

}  // namespace escape_atlas

#endif  // ESCAPE_ATLAS_ODE_HPP
