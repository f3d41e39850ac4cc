#include "bregcal/entropy.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "bregcal/errors.hpp"

namespace bregcal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Hard wall: arguments this close to a finite endpoint are rejected.
constexpr double kEdge = 1e-12;

bool inside(double x, double lo, double hi) {
  if (!std::isfinite(x)) return false;
  if (std::isfinite(lo) && x - lo <= kEdge) return false;
  if (std::isfinite(hi) && hi - x <= kEdge) return false;
  return true;
}

[[noreturn]] void throw_domain(const char* side, const std::string& name,
                               double x, double lo, double hi, long index) {
  std::ostringstream msg;
  msg << name << ": " << side << " argument " << x << " outside open interval ("
      << lo << ", " << hi << ")";
  if (index >= 0) msg << " at unit " << index;
  throw DomainError(msg.str(), x, lo, hi, index);
}

}  // namespace

Generator Generator::squared_loss() {
  // The quadratic generator extends to the whole real line; restricting it
  // to positive weights would make F differ from the nu^2/2 conjugate.
  return Generator(GeneratorKind::SquaredLoss, 0.0, "squared-loss", -kInf,
                   kInf, -kInf, kInf);
}

Generator Generator::kullback_leibler() {
  return Generator(GeneratorKind::KullbackLeibler, 0.0, "kullback-leibler",
                   0.0, kInf, -kInf, kInf);
}

Generator Generator::shifted_kl() {
  // log(w - 1) needs w > 1.
  return Generator(GeneratorKind::ShiftedKL, 0.0, "shifted-kl", 1.0, kInf,
                   -kInf, kInf);
}

Generator Generator::empirical_likelihood() {
  return Generator(GeneratorKind::EmpiricalLikelihood, 0.0,
                   "empirical-likelihood", 0.0, kInf, -kInf, 0.0);
}

Generator Generator::squared_hellinger() {
  return Generator(GeneratorKind::SquaredHellinger, 0.0, "squared-hellinger",
                   0.0, kInf, -kInf, 1.0);
}

Generator Generator::renyi(double alpha) {
  if (alpha == 0.0 || alpha == -1.0) {
    throw InvalidArgument("renyi: alpha must not be 0 or -1");
  }
  if (alpha <= 0.0) {
    // w^(alpha+1)/(alpha+1) has G'' = alpha * w^(alpha-1), which is negative
    // for alpha < 0: not a valid (strictly convex) generator.
    throw InvalidArgument("renyi: alpha must be positive for strict convexity");
  }
  std::ostringstream name;
  name << "renyi(" << alpha << ")";
  return Generator(GeneratorKind::Renyi, alpha, name.str(), 0.0, kInf, 0.0,
                   kInf);
}

Generator Generator::contrast_entropy() {
  return Generator(GeneratorKind::ContrastEntropy, 0.0, "contrast-entropy",
                   1.0, kInf, -kInf, 0.0);
}

Generator Generator::from_key(std::string_view key) {
  if (key == "sq") return squared_loss();
  if (key == "kl") return kullback_leibler();
  if (key == "skl") return shifted_kl();
  if (key == "el") return empirical_likelihood();
  if (key == "hd") return squared_hellinger();
  if (key == "ce") return contrast_entropy();
  if (key.rfind("renyi:", 0) == 0) {
    const std::string arg(key.substr(6));
    try {
      std::size_t pos = 0;
      const double a = std::stod(arg, &pos);
      if (pos != arg.size()) throw std::invalid_argument(arg);
      return renyi(a);
    } catch (const std::logic_error&) {
      throw InvalidArgument("generator key 'renyi:<alpha>' needs a numeric alpha, got '" +
                            arg + "'");
    }
  }
  throw InvalidArgument("unknown generator key '" + std::string(key) +
                        "' (expected sq, kl, skl, el, hd, renyi:<alpha>, ce)");
}

std::string Generator::key() const {
  switch (kind_) {
    case GeneratorKind::SquaredLoss: return "sq";
    case GeneratorKind::KullbackLeibler: return "kl";
    case GeneratorKind::ShiftedKL: return "skl";
    case GeneratorKind::EmpiricalLikelihood: return "el";
    case GeneratorKind::SquaredHellinger: return "hd";
    case GeneratorKind::Renyi: {
      std::ostringstream s;
      s << "renyi:" << alpha_;
      return s.str();
    }
    case GeneratorKind::ContrastEntropy: return "ce";
  }
  return "?";
}

bool Generator::weight_in_domain(double w) const noexcept {
  return inside(w, lo_, hi_);
}

bool Generator::dual_in_domain(double nu) const noexcept {
  return inside(nu, dual_lo_, dual_hi_);
}

void Generator::check_weight(double w, long index) const {
  if (!weight_in_domain(w)) throw_domain("weight", name_, w, lo_, hi_, index);
}

void Generator::check_dual(double nu, long index) const {
  if (!dual_in_domain(nu)) {
    throw_domain("natural-parameter", name_, nu, dual_lo_, dual_hi_, index);
  }
}

double Generator::G(double w) const {
  check_weight(w);
  switch (kind_) {
    case GeneratorKind::SquaredLoss:
      return 0.5 * w * w;
    case GeneratorKind::KullbackLeibler:
      return w * std::log(w);
    case GeneratorKind::ShiftedKL:
      return (w - 1.0) * (std::log(w - 1.0) - 1.0);
    case GeneratorKind::EmpiricalLikelihood:
      return -std::log(w);
    case GeneratorKind::SquaredHellinger: {
      const double s = std::sqrt(w) - 1.0;
      return s * s;
    }
    case GeneratorKind::Renyi:
      return std::pow(w, alpha_ + 1.0) / (alpha_ + 1.0);
    case GeneratorKind::ContrastEntropy:
      return (w - 1.0) * std::log(w - 1.0) - w * std::log(w);
  }
  return 0.0;
}

double Generator::g(double w) const {
  check_weight(w);
  switch (kind_) {
    case GeneratorKind::SquaredLoss:
      return w;
    case GeneratorKind::KullbackLeibler:
      return std::log(w) + 1.0;
    case GeneratorKind::ShiftedKL:
      return std::log(w - 1.0);
    case GeneratorKind::EmpiricalLikelihood:
      return -1.0 / w;
    case GeneratorKind::SquaredHellinger:
      return 1.0 - 1.0 / std::sqrt(w);
    case GeneratorKind::Renyi:
      return std::pow(w, alpha_);
    case GeneratorKind::ContrastEntropy:
      return std::log1p(-1.0 / w);  // log((w-1)/w)
  }
  return 0.0;
}

double Generator::gprime(double w) const {
  check_weight(w);
  switch (kind_) {
    case GeneratorKind::SquaredLoss:
      return 1.0;
    case GeneratorKind::KullbackLeibler:
      return 1.0 / w;
    case GeneratorKind::ShiftedKL:
      return 1.0 / (w - 1.0);
    case GeneratorKind::EmpiricalLikelihood:
      return 1.0 / (w * w);
    case GeneratorKind::SquaredHellinger:
      return 0.5 / (w * std::sqrt(w));
    case GeneratorKind::Renyi:
      return alpha_ * std::pow(w, alpha_ - 1.0);
    case GeneratorKind::ContrastEntropy:
      return 1.0 / (w * (w - 1.0));
  }
  return 0.0;
}

double Generator::qweight(double w) const {
  check_weight(w);
  switch (kind_) {
    case GeneratorKind::SquaredLoss:
      return 1.0;
    case GeneratorKind::KullbackLeibler:
      return w;
    case GeneratorKind::ShiftedKL:
      return w - 1.0;
    case GeneratorKind::EmpiricalLikelihood:
      return w * w;
    case GeneratorKind::SquaredHellinger:
      return 2.0 * w * std::sqrt(w);
    case GeneratorKind::Renyi:
      return std::pow(w, 1.0 - alpha_) / alpha_;
    case GeneratorKind::ContrastEntropy:
      return w * (w - 1.0);
  }
  return 0.0;
}

double Generator::ginv(double nu) const {
  check_dual(nu);
  switch (kind_) {
    case GeneratorKind::SquaredLoss:
      return nu;
    case GeneratorKind::KullbackLeibler:
      return std::exp(nu - 1.0);
    case GeneratorKind::ShiftedKL:
      return 1.0 + std::exp(nu);
    case GeneratorKind::EmpiricalLikelihood:
      return -1.0 / nu;
    case GeneratorKind::SquaredHellinger: {
      const double d = 1.0 - nu;
      return 1.0 / (d * d);
    }
    case GeneratorKind::Renyi:
      return std::pow(nu, 1.0 / alpha_);
    case GeneratorKind::ContrastEntropy:
      return 1.0 / (-std::expm1(nu));  // 1/(1 - e^nu)
  }
  return 0.0;
}

double Generator::F(double nu) const {
  check_dual(nu);
  switch (kind_) {
    case GeneratorKind::SquaredLoss:
      return 0.5 * nu * nu;
    case GeneratorKind::KullbackLeibler:
      return std::exp(nu - 1.0);
    case GeneratorKind::ShiftedKL:
      return nu + std::exp(nu);
    case GeneratorKind::EmpiricalLikelihood:
      return -1.0 - std::log(-nu);
    case GeneratorKind::SquaredHellinger:
      return nu / (1.0 - nu);
    case GeneratorKind::Renyi:
      return alpha_ / (alpha_ + 1.0) * std::pow(nu, (alpha_ + 1.0) / alpha_);
    case GeneratorKind::ContrastEntropy: {
      // Table entry absent: compose F = nu*ginv(nu) - G(ginv(nu)) from the
      // analytic inverse link.
      const double w = 1.0 / (-std::expm1(nu));
      return nu * w - ((w - 1.0) * std::log(w - 1.0) - w * std::log(w));
    }
  }
  return 0.0;
}

double Generator::Fprime(double nu) const {
  check_dual(nu);
  switch (kind_) {
    case GeneratorKind::SquaredLoss:
      return nu;
    case GeneratorKind::KullbackLeibler:
      return std::exp(nu - 1.0);
    case GeneratorKind::ShiftedKL:
      return 1.0 + std::exp(nu);
    case GeneratorKind::EmpiricalLikelihood:
      return -1.0 / nu;
    case GeneratorKind::SquaredHellinger: {
      const double d = 1.0 - nu;
      return 1.0 / (d * d);
    }
    case GeneratorKind::Renyi:
      return std::pow(nu, 1.0 / alpha_);
    case GeneratorKind::ContrastEntropy:
      return 1.0 / (-std::expm1(nu));
  }
  return 0.0;
}

double Generator::Fsecond(double nu) const {
  check_dual(nu);
  switch (kind_) {
    case GeneratorKind::SquaredLoss:
      return 1.0;
    case GeneratorKind::KullbackLeibler:
      return std::exp(nu - 1.0);
    case GeneratorKind::ShiftedKL:
      return std::exp(nu);
    case GeneratorKind::EmpiricalLikelihood:
      return 1.0 / (nu * nu);
    case GeneratorKind::SquaredHellinger: {
      const double d = 1.0 - nu;
      return 2.0 / (d * d * d);
    }
    case GeneratorKind::Renyi:
      return std::pow(nu, (1.0 - alpha_) / alpha_) / alpha_;
    case GeneratorKind::ContrastEntropy: {
      const double e = std::exp(nu);
      const double d = -std::expm1(nu);
      return e / (d * d);
    }
  }
  return 0.0;
}

double Generator::bregman(double w, double w0) const {
  check_weight(w);
  check_weight(w0);
  return G(w) - G(w0) - g(w0) * (w - w0);
}

double Generator::conjugate_bregman(double nu, double nu0) const {
  check_dual(nu);
  check_dual(nu0);
  return F(nu) - F(nu0) - Fprime(nu0) * (nu - nu0);
}

}  // namespace bregcal
