#include "core/polynomial.hpp"

#include <cmath>

#include <json.hpp>

namespace fibm {

Polynomial::Polynomial(double constant) {
  if (constant != 0.0) terms_[{0, 0, 0}] = constant;
}

Polynomial Polynomial::variable(int axis, int dim) {
  Polynomial p;
  p.dim_ = dim;
  Exponents e{};
  e[axis] = 1;
  p.terms_[e] = 1.0;
  return p;
}

void Polynomial::add_term(const Exponents& e, double coeff) {
  if (coeff == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(e, coeff);
  if (!inserted) {
    it->second += coeff;
    if (it->second == 0.0) terms_.erase(it);
  }
}

double Polynomial::eval(const Coord& k) const {
  double acc = 0.0;
  for (const auto& [e, c] : terms_) {
    double t = c;
    for (int a = 0; a < kMaxDim; ++a)
      for (int p = 0; p < e[a]; ++p) t *= k[a];
    acc += t;
  }
  return acc;
}

Polynomial Polynomial::derivative(int axis) const {
  Polynomial d;
  d.dim_ = dim_;
  for (const auto& [e, c] : terms_) {
    if (e[axis] == 0) continue;
    Exponents f = e;
    f[axis] -= 1;
    d.add_term(f, c * e[axis]);
  }
  return d;
}

Polynomial& Polynomial::operator+=(const Polynomial& o) {
  dim_ = std::max(dim_, o.dim_);
  for (const auto& [e, c] : o.terms_) add_term(e, c);
  return *this;
}

Polynomial& Polynomial::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& [e, c] : terms_) c *= s;
  return *this;
}

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  Polynomial r;
  r.dim_ = std::max(a.dim_, b.dim_);
  for (const auto& [ea, ca] : a.terms_)
    for (const auto& [eb, cb] : b.terms_) {
      Polynomial::Exponents e{};
      for (int i = 0; i < kMaxDim; ++i) e[i] = ea[i] + eb[i];
      r.add_term(e, ca * cb);
    }
  return r;
}

bool Polynomial::same_as(const Polynomial& o, double tol) const {
  Polynomial d = o;
  d *= -1.0;
  d += *this;
  for (const auto& [e, c] : d.terms())
    if (std::abs(c) > tol) return false;
  return true;
}

MatrixPolynomialFamily::MatrixPolynomialFamily(int fiber_dim, int dim)
    : mu_(fiber_dim), dim_(dim), entries_(static_cast<size_t>(fiber_dim) * fiber_dim) {
  if (fiber_dim < 1) fail(ErrorCode::InvalidArgument, "fiber_dim must be >= 1");
  if (dim < 1 || dim > kMaxDim) fail(ErrorCode::InvalidArgument, "dim must be 1..3");
  for (auto& e : entries_) e.set_dim(dim);
}

void MatrixPolynomialFamily::validate_hermitian() const {
  for (int i = 0; i < mu_; ++i)
    for (int j = i + 1; j < mu_; ++j)
      if (!entry(i, j).same_as(entry(j, i)))
        fail(ErrorCode::NonHermitian,
             "family entry (" + std::to_string(i) + "," + std::to_string(j) +
                 ") is not the transpose of its mirror");
}

MatrixPolynomialFamily MatrixPolynomialFamily::derivative(int axis) const {
  if (axis < 0 || axis >= dim_)
    fail(ErrorCode::InvalidArgument, "derivative axis " + std::to_string(axis) + " out of range");
  MatrixPolynomialFamily d(mu_, dim_);
  for (int i = 0; i < mu_; ++i)
    for (int j = 0; j < mu_; ++j) d.entry(i, j) = entry(i, j).derivative(axis);
  return d;
}

void MatrixPolynomialFamily::eval(const Coord& k, std::vector<double>& out) const {
  out.resize(entries_.size());
  for (size_t t = 0; t < entries_.size(); ++t) out[t] = entries_[t].eval(k);
}

namespace {

// H0 = s(k) Id + k1 * [[1, k2], [k2, -1]] with s = k2 (second example)
// or s = k1^2 + k2^2 + k2 (first example).
MatrixPolynomialFamily two_band_family(bool quadratic_shift) {
  MatrixPolynomialFamily fam(2, 2);
  Polynomial k1 = Polynomial::variable(0, 2);
  Polynomial k2 = Polynomial::variable(1, 2);
  Polynomial shift = k2;
  if (quadratic_shift) shift += k1 * k1 + k2 * k2;
  fam.entry(0, 0) = shift + k1;
  fam.entry(1, 1) = shift + (k1 * Polynomial(-1.0));
  fam.entry(0, 1) = k1 * k2;
  fam.entry(1, 0) = k1 * k2;
  fam.validate_hermitian();
  return fam;
}

}  // namespace

MatrixPolynomialFamily builtin_family(const std::string& id) {
  if (id == "example1") return two_band_family(true);
  if (id == "example2") return two_band_family(false);
  fail(ErrorCode::InvalidArgument, "unknown builtin model '" + id + "'");
}

DomainSpec builtin_domain(const std::string& id) {
  if (id == "example1") return DomainSpec::box({{{-2.0, 2.0}}, {{-2.0, 2.0}}});
  if (id == "example2") return DomainSpec::box({{{-1.0, 1.0}}, {{-1.0, 1.0}}});
  fail(ErrorCode::InvalidArgument, "unknown builtin model '" + id + "'");
}

MatrixPolynomialFamily family_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const std::exception& e) {
    fail(ErrorCode::Json, std::string("model definition is not valid JSON: ") + e.what());
  }
  if (!j.contains("fiber_dim") || !j.contains("dim") || !j.contains("entries"))
    fail(ErrorCode::Json, "model definition needs fiber_dim, dim and entries");
  const int mu = j["fiber_dim"].get<int>();
  const int dim = j["dim"].get<int>();
  MatrixPolynomialFamily fam(mu, dim);
  for (const auto& [key, terms] : j["entries"].items()) {
    const auto comma = key.find(',');
    if (comma == std::string::npos) fail(ErrorCode::Json, "entry key must be 'i,j'");
    const int i = std::stoi(key.substr(0, comma));
    const int jj = std::stoi(key.substr(comma + 1));
    if (i < 0 || i >= mu || jj < 0 || jj >= mu)
      fail(ErrorCode::Json, "entry index out of range: " + key);
    Polynomial p;
    p.set_dim(dim);
    for (const auto& term : terms) {
      if (!term.is_array() || term.size() != 2)
        fail(ErrorCode::Json, "each term must be [[e1,..,ed], coeff]");
      Polynomial::Exponents e{};
      const auto& exps = term[0];
      if (static_cast<int>(exps.size()) != dim)
        fail(ErrorCode::Json, "exponent tuple length must equal dim");
      for (int a = 0; a < dim; ++a) e[a] = exps[a].get<int>();
      p.add_term(e, term[1].get<double>());
    }
    fam.entry(i, jj) = p;
  }
  fam.validate_hermitian();
  return fam;
}

}  // namespace fibm
