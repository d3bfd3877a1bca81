#include "nsdfm/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nsdfm {

Transform parse_transform(const std::string& code) {
  if (code == "0" || code == "none") return Transform::none;
  if (code == "1" || code == "log") return Transform::log;
  if (code == "2" || code == "dlog") return Transform::dlog;
  throw PreprocessError("unknown transform code '" + code + "'");
}

DetrendMode parse_detrend_mode(const std::string& s) {
  if (s.empty() || s == "auto") return DetrendMode::auto_select;
  if (s == "mean" || s == "force_mean") return DetrendMode::force_mean;
  if (s == "trend" || s == "force_trend") return DetrendMode::force_trend;
  throw PreprocessError("unknown detrend mode '" + s + "'");
}

RhoMode parse_rho_mode(const std::string& s) {
  if (s.empty() || s == "auto") return RhoMode::auto_select;
  if (s == "0" || s == "force_0") return RhoMode::force_0;
  if (s == "1" || s == "force_1") return RhoMode::force_1;
  throw PreprocessError("unknown rho mode '" + s + "'");
}

Frequency parse_frequency(const std::string& s) {
  if (s.empty() || s == "q" || s == "quarterly") return Frequency::quarterly;
  if (s == "m" || s == "monthly") return Frequency::monthly;
  if (s == "d" || s == "daily") return Frequency::daily;
  throw PreprocessError("unknown frequency '" + s + "'");
}

std::string to_string(Transform t) {
  switch (t) {
    case Transform::none: return "none";
    case Transform::log: return "log";
    case Transform::dlog: return "dlog";
  }
  return "none";
}

std::string to_string(DetrendMode m) {
  switch (m) {
    case DetrendMode::auto_select: return "auto";
    case DetrendMode::force_mean: return "force_mean";
    case DetrendMode::force_trend: return "force_trend";
  }
  return "auto";
}

std::string to_string(RhoMode m) {
  switch (m) {
    case RhoMode::auto_select: return "auto";
    case RhoMode::force_0: return "force_0";
    case RhoMode::force_1: return "force_1";
  }
  return "auto";
}

Vector aggregate_to_quarterly(const Vector& y, Frequency freq, const std::vector<int>& quarter_keys) {
  if (freq == Frequency::quarterly) return y;
  if (freq == Frequency::monthly) {
    const Eigen::Index nq = y.size() / 3;
    if (nq == 0) throw PreprocessError("aggregate_to_quarterly: no complete quarter");
    Vector out(nq);
    for (Eigen::Index k = 0; k < nq; ++k) out(k) = y.segment(3 * k, 3).mean();
    return out;
  }
  if (static_cast<Eigen::Index>(quarter_keys.size()) != y.size()) {
    throw PreprocessError("aggregate_to_quarterly: daily input needs one quarter key per observation");
  }
  if (y.size() == 0) throw PreprocessError("aggregate_to_quarterly: empty series");
  std::vector<double> out;
  double sum = 0.0;
  int count = 0;
  int current = quarter_keys.front();
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const int key = quarter_keys[static_cast<std::size_t>(i)];
    if (key < current) throw PreprocessError("aggregate_to_quarterly: quarter keys decrease");
    if (key > current) {
      if (key > current + 1) {
        throw PreprocessError("aggregate_to_quarterly: empty quarter after key " + std::to_string(current));
      }
      out.push_back(sum / count);
      sum = 0.0;
      count = 0;
      current = key;
    }
    sum += y(i);
    ++count;
  }
  out.push_back(sum / count);
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Vector apply_transform(const Vector& y, Transform t) {
  if (t == Transform::none) return y;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(y(i) > 0.0)) {
      throw PreprocessError("log transform of nonpositive value at index " + std::to_string(i));
    }
  }
  Vector logged = y.array().log();
  if (t == Transform::log) return logged;
  if (logged.size() < 2) return Vector(0);
  return logged.tail(logged.size() - 1) - logged.head(logged.size() - 1);
}

Vector winsorize(const Vector& y, double k) {
  if (!(k > 0.0) || y.size() == 0) return y;
  std::vector<double> v(y.data(), y.data() + y.size());
  auto median_of = [](std::vector<double> s) {
    const std::size_t mid = s.size() / 2;
    std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(mid), s.end());
    double m = s[mid];
    if (s.size() % 2 == 0) {
      m = 0.5 * (m + *std::max_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
  };
  const double med = median_of(v);
  for (double& e : v) e = std::abs(e - med);
  const double mad = 1.4826 * median_of(v);
  if (mad == 0.0) return y;
  return y.array().min(med + k * mad).max(med - k * mad);
}

double DetrendResult::deterministic(Eigen::Index t) const {
  const double tt = static_cast<double>(t);
  return mode_used == TrendKind::trend ? a_hat + b_hat * tt : a_hat * tt + level;
}

Vector DetrendResult::path(Eigen::Index T) const {
  Vector out(T);
  for (Eigen::Index t = 0; t < T; ++t) out(t) = deterministic(t + 1);
  return out;
}

double drift_statistic(const Vector& y, int max_lag, bool* negative_variance) {
  if (negative_variance != nullptr) *negative_variance = false;
  const Eigen::Index n = y.size() - 1;
  if (n < 2) return 0.0;
  const Vector dy = y.tail(n) - y.head(n);
  const double m = dy.mean();
  const Vector c = dy.array() - m;
  const int J = max_lag >= 0 ? max_lag : static_cast<int>(std::floor(std::cbrt(static_cast<double>(n))));
  double lrv = c.squaredNorm() / static_cast<double>(n);
  for (int j = 1; j <= J && j < n; ++j) {
    const double g = c.head(n - j).dot(c.tail(n - j)) / static_cast<double>(n);
    lrv += 2.0 * (1.0 - static_cast<double>(j) / (J + 1)) * g;
  }
  // Compare on the scale of the data so that exact constants give 0/0.
  const double scale = std::max(dy.cwiseAbs().maxCoeff(), std::abs(m));
  if (scale == 0.0 || std::abs(m) <= 1e-14 * scale) return 0.0;
  if (lrv < 0.0) {
    if (negative_variance != nullptr) *negative_variance = true;
    return 0.0;
  }
  const double gamma_bar = std::sqrt(lrv / static_cast<double>(n));
  if (gamma_bar <= 1e-14 * scale) return std::numeric_limits<double>::infinity();
  return std::abs(m) / gamma_bar;
}

Detrended detrend(const Vector& y, DetrendMode mode, const DetrendOptions& opt) {
  const Eigen::Index T = y.size();
  if (T < 8) throw PreprocessError("detrend: need at least 8 observations");
  if (!y.allFinite()) throw PreprocessError("detrend: non-finite observation");
  Detrended out;
  DetrendResult& res = out.result;
  bool negative = false;
  res.statistic = drift_statistic(y, opt.max_lag, &negative);
  res.fallback = negative;

  bool use_trend = mode == DetrendMode::force_trend;
  if (mode == DetrendMode::auto_select) use_trend = !negative && res.statistic >= opt.threshold;

  if (use_trend) {
    Matrix design(T, 2);
    for (Eigen::Index t = 0; t < T; ++t) {
      design(t, 0) = 1.0;
      design(t, 1) = static_cast<double>(t + 1);
    }
    const Vector coef = design.colPivHouseholderQr().solve(y);
    res.mode_used = TrendKind::trend;
    res.a_hat = coef(0);
    res.b_hat = coef(1);
    res.level = coef(0);
  } else {
    res.mode_used = TrendKind::mean;
    res.a_hat = (y(T - 1) - y(0)) / static_cast<double>(T - 1);
    res.b_hat = 0.0;
    res.level = 0.0;
    if (opt.demean_residual) {
      double s = 0.0;
      for (Eigen::Index t = 0; t < T; ++t) s += y(t) - res.a_hat * static_cast<double>(t + 1);
      res.level = s / static_cast<double>(T);
    }
  }
  out.residual = y - res.path(T);
  return out;
}

Vector add_back_deterministic(const Vector& component, const DetrendResult& det) {
  return component + det.path(component.size());
}

}  // namespace nsdfm
