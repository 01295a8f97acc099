#pragma once

// Scalar kernel families k(r) with analytic derivatives up to third order,
// and the two metric forms r(x_a, x_b) they are composed with:
//
//   dot product:  r = (x_a - c)^T Lambda (x_b - c)
//   stationary:   r = (x_a - x_b)^T Lambda (x_a - x_b)
//
// Note that for stationary kernels r is the *squared* scaled distance.

#include <gpgrad/types.hpp>

#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace gpgrad {

enum class LengthscaleKind { Isotropic, Diagonal, Dense };

// The symmetric positive definite scaling matrix Lambda. Stored in the
// cheapest sufficient form; apply/apply_inverse are exact mutual inverses
// up to roundoff.
template <class Scalar>
class Lengthscale {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  Lengthscale() : kind_(LengthscaleKind::Isotropic), iso_(Scalar(1)) {}

  static Lengthscale isotropic(Scalar value) {
    if (!(value > Scalar(0))) throw DomainError("isotropic lengthscale must be > 0");
    Lengthscale s;
    s.kind_ = LengthscaleKind::Isotropic;
    s.iso_ = value;
    return s;
  }

  static Lengthscale diagonal(const Vector& values) {
    if ((values.array() <= Scalar(0)).any())
      throw DomainError("diagonal lengthscale entries must be > 0");
    Lengthscale s;
    s.kind_ = LengthscaleKind::Diagonal;
    s.diag_ = values;
    return s;
  }

  static Lengthscale dense_spd(const Matrix& m) {
    if (m.rows() != m.cols()) throw DimensionError("lengthscale matrix must be square");
    if ((m - m.transpose()).cwiseAbs().maxCoeff() >
        Scalar(1e-12) * std::max(Scalar(1), m.cwiseAbs().maxCoeff()))
      throw DomainError("lengthscale matrix must be symmetric");
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success)
      throw DomainError("lengthscale matrix must be positive definite");
    Lengthscale s;
    s.kind_ = LengthscaleKind::Dense;
    s.dense_ = m;
    s.llt_ = llt;
    return s;
  }

  LengthscaleKind kind() const { return kind_; }
  Scalar iso_value() const { return iso_; }
  const Vector& diag_values() const { return diag_; }
  const Matrix& dense_matrix() const { return dense_; }

  // Dimension constraint, or -1 if any dimension is accepted (isotropic).
  Index dim() const {
    switch (kind_) {
      case LengthscaleKind::Isotropic: return -1;
      case LengthscaleKind::Diagonal: return diag_.size();
      case LengthscaleKind::Dense: return dense_.rows();
    }
    return -1;
  }

  void check_dim(Index d) const {
    if (dim() >= 0 && dim() != d) throw DimensionError("lengthscale dimension mismatch");
  }

  // Lambda * M, column-wise for matrices.
  template <class Derived>
  Matrix apply(const Eigen::MatrixBase<Derived>& m) const {
    check_dim(m.rows());
    switch (kind_) {
      case LengthscaleKind::Isotropic: return iso_ * m;
      case LengthscaleKind::Diagonal: return diag_.asDiagonal() * m;
      case LengthscaleKind::Dense: return dense_ * m;
    }
    return m;
  }

  template <class Derived>
  Matrix apply_inverse(const Eigen::MatrixBase<Derived>& m) const {
    check_dim(m.rows());
    switch (kind_) {
      case LengthscaleKind::Isotropic: return m / iso_;
      case LengthscaleKind::Diagonal: return diag_.cwiseInverse().asDiagonal() * m;
      case LengthscaleKind::Dense: return llt_.solve(m);
    }
    return m;
  }

  // u^T Lambda v
  template <class DA, class DB>
  Scalar quadratic(const Eigen::MatrixBase<DA>& u, const Eigen::MatrixBase<DB>& v) const {
    if (u.size() != v.size()) throw DimensionError("quadratic form dimension mismatch");
    switch (kind_) {
      case LengthscaleKind::Isotropic: return iso_ * u.dot(v);
      case LengthscaleKind::Diagonal: return u.dot(diag_.asDiagonal() * v);
      case LengthscaleKind::Dense: return u.dot(dense_ * v);
    }
    return Scalar(0);
  }

  // Lambda as an explicit D x D matrix.
  Matrix to_dense(Index d) const {
    check_dim(d);
    switch (kind_) {
      case LengthscaleKind::Isotropic: return iso_ * Matrix::Identity(d, d);
      case LengthscaleKind::Diagonal: return Matrix(diag_.asDiagonal());
      case LengthscaleKind::Dense: return dense_;
    }
    return Matrix::Identity(d, d);
  }

 private:
  LengthscaleKind kind_;
  Scalar iso_ = Scalar(1);
  Vector diag_;
  Matrix dense_;
  Eigen::LLT<Matrix> llt_;
};

enum class MetricForm { DotProduct, Stationary };

template <class Scalar>
struct Metric {
  MetricForm form = MetricForm::Stationary;
  Lengthscale<Scalar> scale;
  // Offset c for the dot product form. Empty means c = 0 in any dimension.
  VectorX<Scalar> offset;

  static Metric dot_product(Lengthscale<Scalar> scale, VectorX<Scalar> offset = {}) {
    Metric m;
    m.form = MetricForm::DotProduct;
    m.scale = std::move(scale);
    m.offset = std::move(offset);
    return m;
  }

  static Metric stationary(Lengthscale<Scalar> scale) {
    Metric m;
    m.form = MetricForm::Stationary;
    m.scale = std::move(scale);
    return m;
  }

  VectorX<Scalar> offset_for(Index d) const {
    if (offset.size() == 0) return VectorX<Scalar>::Zero(d);
    if (offset.size() != d) throw DimensionError("metric offset dimension mismatch");
    return offset;
  }
};

template <class Scalar, class DA, class DB>
Scalar eval_r(const Metric<Scalar>& metric, const Eigen::MatrixBase<DA>& xa,
              const Eigen::MatrixBase<DB>& xb) {
  if (xa.size() != xb.size()) throw DimensionError("eval_r: input dimensions differ");
  if (metric.form == MetricForm::DotProduct) {
    const VectorX<Scalar> c = metric.offset_for(xa.size());
    return metric.scale.quadratic(xa - c, xb - c);
  }
  const VectorX<Scalar> d = xa - xb;
  // Exact formula is a quadratic form >= 0; clamp roundoff.
  return std::max(metric.scale.quadratic(d, d), Scalar(0));
}

enum class KernelFamily {
  Polynomial,
  Exponential,
  SquaredExponential,
  Matern,
  RationalQuadratic
};

// k(r) and its first three derivatives with respect to r.
template <class Scalar>
struct KernelDerivs {
  Scalar k, kp, kpp, kppp;
};

template <class Scalar>
struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  int poly_order = 2;      // Polynomial: p >= 2
  int matern_half = 2;     // Matern: nu = matern_half + 1/2, in {0, 1, 2}
  Scalar rq_alpha = Scalar(1);
  Metric<Scalar> metric;

  static KernelSpec polynomial(int p, Metric<Scalar> metric) {
    if (p < 2) throw DomainError("polynomial kernel requires p >= 2");
    KernelSpec s;
    s.family = KernelFamily::Polynomial;
    s.poly_order = p;
    s.metric = std::move(metric);
    s.validate();
    return s;
  }

  static KernelSpec exponential(Metric<Scalar> metric) {
    KernelSpec s;
    s.family = KernelFamily::Exponential;
    s.metric = std::move(metric);
    s.validate();
    return s;
  }

  static KernelSpec squared_exponential(Metric<Scalar> metric) {
    KernelSpec s;
    s.family = KernelFamily::SquaredExponential;
    s.metric = std::move(metric);
    s.validate();
    return s;
  }

  static KernelSpec matern(Scalar nu, Metric<Scalar> metric) {
    KernelSpec s;
    s.family = KernelFamily::Matern;
    if (nu == Scalar(0.5)) s.matern_half = 0;
    else if (nu == Scalar(1.5)) s.matern_half = 1;
    else if (nu == Scalar(2.5)) s.matern_half = 2;
    else throw DomainError("matern nu must be one of 1/2, 3/2, 5/2");
    s.metric = std::move(metric);
    s.validate();
    return s;
  }

  static KernelSpec rational_quadratic(Scalar alpha, Metric<Scalar> metric) {
    if (!(alpha > Scalar(0))) throw DomainError("rational quadratic alpha must be > 0");
    KernelSpec s;
    s.family = KernelFamily::RationalQuadratic;
    s.rq_alpha = alpha;
    s.metric = std::move(metric);
    s.validate();
    return s;
  }

  // Polynomial/Exponential pair with the dot product metric only; the
  // stationary families with the stationary metric only.
  void validate() const {
    const bool dot = family == KernelFamily::Polynomial || family == KernelFamily::Exponential;
    if (dot && metric.form != MetricForm::DotProduct)
      throw DomainError("polynomial/exponential kernels require the dot product metric");
    if (!dot && metric.form != MetricForm::Stationary)
      throw DomainError("stationary kernel families require the stationary metric");
    if (family == KernelFamily::Polynomial && poly_order < 2)
      throw DomainError("polynomial kernel requires p >= 2");
    if (family == KernelFamily::Matern && (matern_half < 0 || matern_half > 2))
      throw DomainError("matern nu must be one of 1/2, 3/2, 5/2");
  }

  // Matern 1/2 has a derivative that diverges as r -> 0; its sample paths
  // are not differentiable and it is rejected by gradient Gram construction.
  bool supports_derivatives() const {
    return !(family == KernelFamily::Matern && matern_half == 0);
  }
};

namespace detail {

// Closed forms for the Matern family at half-integer smoothness written in
// s = sqrt(2 nu r); the 0/0 forms at the origin are replaced by explicit
// limit values below a switch threshold.
inline constexpr double kOriginSwitch = 1e-12;

// Tolerance below which two points are considered duplicates/coincident,
// measured in the metric-induced squared distance.
inline constexpr double kDuplicateTol = 1e-12;

}  // namespace detail

template <class Scalar>
KernelDerivs<Scalar> eval_k_derivs(const KernelSpec<Scalar>& spec, Scalar r) {
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  switch (spec.family) {
    case KernelFamily::Polynomial: {
      const int p = spec.poly_order;
      const Scalar k = std::pow(r, Scalar(p)) / Scalar(p * (p - 1));
      const Scalar kp = std::pow(r, Scalar(p - 1)) / Scalar(p - 1);
      const Scalar kpp = std::pow(r, Scalar(p - 2));
      const Scalar kppp = p == 2 ? Scalar(0) : Scalar(p - 2) * std::pow(r, Scalar(p - 3));
      return {k, kp, kpp, kppp};
    }
    case KernelFamily::Exponential: {
      const Scalar e = std::exp(r);
      return {e, e, e, e};
    }
    case KernelFamily::SquaredExponential: {
      if (r < Scalar(0)) throw DomainError("stationary kernel evaluated at r < 0");
      const Scalar k = std::exp(-r / Scalar(2));
      return {k, -k / Scalar(2), k / Scalar(4), -k / Scalar(8)};
    }
    case KernelFamily::Matern: {
      if (r < Scalar(0)) throw DomainError("stationary kernel evaluated at r < 0");
      if (spec.matern_half == 0) {
        if (r < Scalar(detail::kOriginSwitch))
          throw SingularityError("matern 1/2 derivatives diverge at r = 0");
        const Scalar s = std::sqrt(r);
        const Scalar e = std::exp(-s);
        const Scalar k = e;
        const Scalar kp = -e / (Scalar(2) * s);
        const Scalar kpp = e * (s + Scalar(1)) / (Scalar(4) * s * s * s);
        const Scalar kppp =
            -e * (s * s + Scalar(3) * s + Scalar(3)) / (Scalar(8) * std::pow(s, Scalar(5)));
        return {k, kp, kpp, kppp};
      }
      if (spec.matern_half == 1) {
        if (r < Scalar(detail::kOriginSwitch)) return {Scalar(1), Scalar(-1.5), inf, -inf};
        const Scalar s = std::sqrt(Scalar(3) * r);
        const Scalar e = std::exp(-s);
        return {(Scalar(1) + s) * e, Scalar(-1.5) * e, Scalar(2.25) * e / s,
                Scalar(-27.0 / 8.0) * (Scalar(1) + s) * e / (s * s * s)};
      }
      // nu = 5/2
      if (r < Scalar(detail::kOriginSwitch))
        return {Scalar(1), Scalar(-5.0 / 6.0), Scalar(25.0 / 12.0), -inf};
      const Scalar s = std::sqrt(Scalar(5) * r);
      const Scalar e = std::exp(-s);
      return {(Scalar(1) + s + s * s / Scalar(3)) * e,
              Scalar(-5.0 / 6.0) * (Scalar(1) + s) * e, Scalar(25.0 / 12.0) * e,
              Scalar(-125.0 / 24.0) * e / s};
    }
    case KernelFamily::RationalQuadratic: {
      if (r < Scalar(0)) throw DomainError("stationary kernel evaluated at r < 0");
      const Scalar a = spec.rq_alpha;
      const Scalar u = Scalar(1) + r / (Scalar(2) * a);
      return {std::pow(u, -a), Scalar(-0.5) * std::pow(u, -a - 1),
              (a + Scalar(1)) / (Scalar(4) * a) * std::pow(u, -a - 2),
              -(a + Scalar(1)) * (a + Scalar(2)) / (Scalar(8) * a * a) * std::pow(u, -a - 3)};
    }
  }
  throw DomainError("unknown kernel family");
}

template <class Scalar>
Scalar eval_kernel(const KernelSpec<Scalar>& spec, const VectorX<Scalar>& xa,
                   const VectorX<Scalar>& xb) {
  return eval_k_derivs(spec, eval_r(spec.metric, xa, xb)).k;
}

// ---------------------------------------------------------------------------
// Plain-text key-value serialization.
// Keys: family, p, nu, alpha, lengthscale, offset, metric.

using KeyValueMap = std::map<std::string, std::string>;

namespace detail {

template <class Scalar>
std::vector<Scalar> parse_scalar_list(const std::string& text) {
  std::vector<Scalar> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(static_cast<Scalar>(std::stod(item)));
  }
  return out;
}

template <class Scalar>
std::string format_scalar_list(const VectorX<Scalar>& v) {
  std::ostringstream os;
  os.precision(17);
  for (Index i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  return os.str();
}

}  // namespace detail

template <class Scalar>
KeyValueMap kernel_to_config(const KernelSpec<Scalar>& spec) {
  KeyValueMap kv;
  switch (spec.family) {
    case KernelFamily::Polynomial:
      kv["family"] = "polynomial";
      kv["p"] = std::to_string(spec.poly_order);
      break;
    case KernelFamily::Exponential: kv["family"] = "exponential"; break;
    case KernelFamily::SquaredExponential: kv["family"] = "squared_exponential"; break;
    case KernelFamily::Matern: {
      kv["family"] = "matern";
      const char* nus[] = {"0.5", "1.5", "2.5"};
      kv["nu"] = nus[spec.matern_half];
      break;
    }
    case KernelFamily::RationalQuadratic: {
      kv["family"] = "rational_quadratic";
      std::ostringstream os;
      os.precision(17);
      os << spec.rq_alpha;
      kv["alpha"] = os.str();
      break;
    }
  }
  kv["metric"] = spec.metric.form == MetricForm::DotProduct ? "dot" : "stationary";
  const auto& scale = spec.metric.scale;
  if (scale.kind() == LengthscaleKind::Isotropic) {
    std::ostringstream os;
    os.precision(17);
    os << scale.iso_value();
    kv["lengthscale"] = os.str();
  } else if (scale.kind() == LengthscaleKind::Diagonal) {
    kv["lengthscale"] = detail::format_scalar_list<Scalar>(scale.diag_values());
  } else {
    throw DomainError("dense lengthscale matrices are not serializable");
  }
  if (spec.metric.offset.size() > 0)
    kv["offset"] = detail::format_scalar_list<Scalar>(spec.metric.offset);
  return kv;
}

template <class Scalar>
KernelSpec<Scalar> kernel_from_config(const KeyValueMap& kv) {
  auto get = [&](const std::string& key) -> std::string {
    auto it = kv.find(key);
    return it == kv.end() ? std::string() : it->second;
  };
  const std::string family = get("family");
  if (family.empty()) throw DomainError("kernel config requires a 'family' key");

  Lengthscale<Scalar> scale;
  if (const std::string ls = get("lengthscale"); !ls.empty()) {
    auto vals = detail::parse_scalar_list<Scalar>(ls);
    if (vals.size() == 1) {
      scale = Lengthscale<Scalar>::isotropic(vals[0]);
    } else {
      VectorX<Scalar> d(static_cast<Index>(vals.size()));
      for (size_t i = 0; i < vals.size(); ++i) d[static_cast<Index>(i)] = vals[i];
      scale = Lengthscale<Scalar>::diagonal(d);
    }
  }

  VectorX<Scalar> offset;
  if (const std::string off = get("offset"); !off.empty()) {
    auto vals = detail::parse_scalar_list<Scalar>(off);
    offset.resize(static_cast<Index>(vals.size()));
    for (size_t i = 0; i < vals.size(); ++i) offset[static_cast<Index>(i)] = vals[i];
  }

  const std::string metric_name = get("metric");
  const bool dot_family = family == "polynomial" || family == "exponential";
  const bool dot = metric_name.empty() ? dot_family : metric_name == "dot";
  if (!metric_name.empty() && metric_name != "dot" && metric_name != "stationary")
    throw DomainError("metric must be 'dot' or 'stationary'");
  Metric<Scalar> metric = dot ? Metric<Scalar>::dot_product(scale, offset)
                              : Metric<Scalar>::stationary(scale);

  if (family == "polynomial") {
    const std::string p = get("p");
    return KernelSpec<Scalar>::polynomial(p.empty() ? 2 : std::stoi(p), metric);
  }
  if (family == "exponential") return KernelSpec<Scalar>::exponential(metric);
  if (family == "squared_exponential" || family == "rbf")
    return KernelSpec<Scalar>::squared_exponential(metric);
  if (family == "matern") {
    const std::string nu = get("nu");
    return KernelSpec<Scalar>::matern(nu.empty() ? Scalar(2.5) : Scalar(std::stod(nu)), metric);
  }
  if (family == "rational_quadratic") {
    const std::string alpha = get("alpha");
    return KernelSpec<Scalar>::rational_quadratic(
        alpha.empty() ? Scalar(1) : Scalar(std::stod(alpha)), metric);
  }
  throw DomainError("unknown kernel family: " + family);
}

}  // namespace gpgrad
