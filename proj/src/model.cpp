#include "nsdfm/model.hpp"

#include <cmath>
#include <sstream>

namespace nsdfm {

std::vector<std::string> ModelSpec::violations() const {
  std::vector<std::string> out;
  if (n <= 0) out.emplace_back("n must be positive");
  if (T <= 0) out.emplace_back("T must be positive");
  if (r <= 0) out.emplace_back("r must be positive");
  if (q <= 0) out.emplace_back("q must be positive");
  if (!(0 < d && d < q)) out.emplace_back("d must satisfy 0 < d < q");
  if (q > r) out.emplace_back("q must not exceed r");
  if (n > 0 && r > n) out.emplace_back("r must not exceed n");
  if (var_order != 2) out.emplace_back("var_order is fixed at 2");
  if (!(diffuse_scale > 0.0)) out.emplace_back("diffuse_scale must be positive");
  if (!(em_tol > 0.0)) out.emplace_back("em_tol must be positive");
  if (em_max_iter <= 0) out.emplace_back("em_max_iter must be positive");
  if (!(i1_floor_frac > 0.0)) out.emplace_back("i1_floor_frac must be positive");
  return out;
}

std::vector<std::string> ModelSpec::warnings() const {
  std::vector<std::string> out;
  if (r != 2 * q) {
    std::ostringstream os;
    os << "r = " << r << " differs from 2q = " << 2 * q << " (one lag of the dynamic factors)";
    out.push_back(os.str());
  }
  return out;
}

int Params::n_i1() const {
  int count = 0;
  for (int flag : rho) count += flag == 1 ? 1 : 0;
  return count;
}

Vector Params::observation_variance() const {
  Vector v = r_diag;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (rho[static_cast<std::size_t>(i)] == 1) v(i) = i1_noise(i);
  }
  return v;
}

namespace {

void check_shape(std::vector<std::string>& out, const char* name, const Matrix& m,
                 Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << name << " is " << m.rows() << "x" << m.cols() << ", expected " << rows << "x" << cols;
    out.push_back(os.str());
  }
}

}  // namespace

ValidationReport validate_params(const Params& p, const ModelSpec& spec) {
  ValidationReport report;
  auto& v = report.violations;
  for (const auto& s : spec.violations()) v.push_back("spec: " + s);
  const std::size_t before = v.size();

  check_shape(v, "Lambda", p.lambda, spec.n, spec.r);
  check_shape(v, "A1", p.a1, spec.r, spec.r);
  check_shape(v, "A2", p.a2, spec.r, spec.r);
  check_shape(v, "H", p.h, spec.r, spec.q);
  if (p.r_diag.size() != spec.n) v.emplace_back("R has wrong length");
  if (static_cast<int>(p.rho.size()) != spec.n) v.emplace_back("rho has wrong length");
  if (v.size() > before) return report;

  const bool finite = p.lambda.allFinite() && p.a1.allFinite() && p.a2.allFinite() &&
                      p.h.allFinite() && p.r_diag.allFinite();
  if (!finite) v.emplace_back("parameters contain non-finite values");

  for (int i = 0; i < spec.n; ++i) {
    const int flag = p.rho[static_cast<std::size_t>(i)];
    if (flag != 0 && flag != 1) {
      v.push_back("rho[" + std::to_string(i) + "] must be 0 or 1");
      continue;
    }
    if (flag == 0 && !(p.r_diag(i) > 0.0)) {
      v.push_back("[R]_{ii}>0 violated at i=" + std::to_string(i));
    }
    if (flag == 1) {
      if (!(p.r_diag(i) >= 0.0)) v.push_back("random-walk variance negative at i=" + std::to_string(i));
      if (p.i1_noise.size() != spec.n || !(p.i1_noise(i) > 0.0)) {
        v.push_back("I(1) measurement floor missing or nonpositive at i=" + std::to_string(i));
      }
    }
  }
  if (finite && numerical_rank(p.h) < spec.q) {
    v.emplace_back("H must have full column rank q");
  }
  return report;
}

StateSpace build_state_space(const Params& p, const ModelSpec& spec) {
  const Eigen::Index n = spec.n;
  const Eigen::Index r = spec.r;
  if (p.lambda.rows() != n || p.lambda.cols() != r) throw ModelError("Lambda", "dimension mismatch with spec");
  if (p.a1.rows() != r || p.a1.cols() != r) throw ModelError("A1", "dimension mismatch with spec");
  if (p.a2.rows() != r || p.a2.cols() != r) throw ModelError("A2", "dimension mismatch with spec");
  if (p.h.rows() != r || p.h.cols() != spec.q) throw ModelError("H", "dimension mismatch with spec");
  if (p.r_diag.size() != n) throw ModelError("R", "dimension mismatch with spec");
  if (static_cast<Eigen::Index>(p.rho.size()) != n) throw ModelError("rho", "dimension mismatch with spec");
  const int n1 = p.n_i1();
  if (n1 > 0 && p.i1_noise.size() != n) throw ModelError("i1_noise", "dimension mismatch with spec");

  const Eigen::Index m = 2 * r + n1;
  StateSpace ss;
  ss.factors = static_cast<int>(r);
  ss.transition = Matrix::Zero(m, m);
  ss.transition.block(0, 0, r, r) = p.a1;
  ss.transition.block(0, r, r, r) = p.a2;
  ss.transition.block(r, 0, r, r).setIdentity();
  if (n1 > 0) ss.transition.block(2 * r, 2 * r, n1, n1).setIdentity();

  ss.design = Matrix::Zero(n, m);
  ss.design.leftCols(r) = p.lambda;
  ss.state_cov = Matrix::Zero(m, m);
  ss.state_cov.block(0, 0, r, r) = p.h * p.h.transpose();
  ss.obs_var = p.observation_variance();

  Eigen::Index k = 2 * r;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p.rho[static_cast<std::size_t>(i)] != 1) continue;
    ss.design(i, k) = 1.0;
    ss.state_cov(k, k) = p.r_diag(i);
    ss.i1_series.push_back(static_cast<int>(i));
    ++k;
  }
  return ss;
}

}  // namespace nsdfm
