#pragma once

#include <string>
#include <string_view>

namespace bregcal {

enum class GeneratorKind {
  SquaredLoss,
  KullbackLeibler,
  ShiftedKL,
  EmpiricalLikelihood,
  SquaredHellinger,
  Renyi,
  ContrastEntropy,
};

/// A strictly convex generator G on an open weight domain, together with its
/// derivative g = G' (the calibration link), the inverse link g^{-1}, and the
/// convex conjugate F with F' = g^{-1} and F'' = 1/(g' o g^{-1}).
///
/// Instances are immutable values; all evaluations are pure and thread-safe.
/// Every evaluation checks its argument against the open domain and throws
/// DomainError within 1e-12 of a finite endpoint: solvers rely on hard walls
/// instead of infinities.
class Generator {
 public:
  static Generator squared_loss();
  static Generator kullback_leibler();
  static Generator shifted_kl();
  static Generator empirical_likelihood();
  static Generator squared_hellinger();
  static Generator renyi(double alpha);
  static Generator contrast_entropy();

  /// Parses a CLI/config key: "sq", "kl", "skl", "el", "hd", "renyi:<alpha>",
  /// "ce". Throws InvalidArgument on unknown keys.
  static Generator from_key(std::string_view key);

  GeneratorKind kind() const noexcept { return kind_; }
  double alpha() const noexcept { return alpha_; }
  const std::string& name() const noexcept { return name_; }
  std::string key() const;

  /// Open weight domain (nu_1, nu_2); endpoints may be infinite.
  double domain_lo() const noexcept { return lo_; }
  double domain_hi() const noexcept { return hi_; }
  /// Open natural-parameter domain, the range of g over the weight domain.
  double dual_lo() const noexcept { return dual_lo_; }
  double dual_hi() const noexcept { return dual_hi_; }

  bool weight_in_domain(double w) const noexcept;
  bool dual_in_domain(double nu) const noexcept;
  void check_weight(double w, long index = -1) const;
  void check_dual(double nu, long index = -1) const;

  double G(double w) const;       ///< generator value
  double g(double w) const;       ///< calibration link G'
  double gprime(double w) const;  ///< curvature G'' > 0
  double ginv(double nu) const;   ///< inverse calibration link

  double F(double nu) const;        ///< convex conjugate
  double Fprime(double nu) const;   ///< = ginv(nu)
  double Fsecond(double nu) const;  ///< = 1/gprime(ginv(nu))

  /// Curvature weight q(w) = 1/g'(w), the per-unit weight of the
  /// generator-dependent regression coefficient. For contrast entropy this
  /// is exactly w^2 - w, the design-optimal choice under Poisson sampling.
  double qweight(double w) const;

  /// Bregman divergence D_G(w || w0) >= 0.
  double bregman(double w, double w0) const;
  /// Conjugate-side divergence D_F(nu || nu0) >= 0.
  double conjugate_bregman(double nu, double nu0) const;

 private:
  Generator(GeneratorKind kind, double alpha, std::string name, double lo,
            double hi, double dual_lo, double dual_hi)
      : kind_(kind),
        alpha_(alpha),
        name_(std::move(name)),
        lo_(lo),
        hi_(hi),
        dual_lo_(dual_lo),
        dual_hi_(dual_hi) {}

  GeneratorKind kind_;
  double alpha_;
  std::string name_;
  double lo_, hi_;
  double dual_lo_, dual_hi_;
};

}  // namespace bregcal
