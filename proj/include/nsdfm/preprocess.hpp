#pragma once

#include "nsdfm/linalg.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsdfm {

class PreprocessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Transform { none = 0, log = 1, dlog = 2 };
enum class DetrendMode { auto_select, force_mean, force_trend };
enum class RhoMode { auto_select, force_0, force_1 };
enum class Frequency { quarterly, monthly, daily };

struct SeriesMeta {
  std::string id;
  Transform transform = Transform::none;
  bool sa = true;
  DetrendMode detrend_mode = DetrendMode::auto_select;
  std::optional<std::string> tie_group;
  RhoMode rho_mode = RhoMode::auto_select;
  Frequency frequency = Frequency::quarterly;
  double winsorize_mad = 0.0;  // 0 disables the outlier hook
};

Transform parse_transform(const std::string& code);
DetrendMode parse_detrend_mode(const std::string& s);
RhoMode parse_rho_mode(const std::string& s);
Frequency parse_frequency(const std::string& s);
std::string to_string(Transform t);
std::string to_string(DetrendMode m);
std::string to_string(RhoMode m);

/// Quarterly simple averages. Monthly input is grouped in blocks of three
/// (a partial trailing quarter is dropped). Daily input needs one quarter
/// key per observation (e.g. 4*year + quarter - 1); keys must be
/// nondecreasing and no quarter may be empty.
Vector aggregate_to_quarterly(const Vector& y, Frequency freq,
                              const std::vector<int>& quarter_keys = {});

/// Elementwise transform; dlog drops the first observation.
Vector apply_transform(const Vector& y, Transform t);

/// Clamps observations further than `k` scaled MADs from the median.
Vector winsorize(const Vector& y, double k);

enum class TrendKind { mean, trend };

struct DetrendOptions {
  int max_lag = -1;             // J; negative means floor(T^{1/3})
  bool demean_residual = true;  // remove the residual mean in mean mode
  double threshold = 1.96;
};

/// Deterministic part D_t (t = 1..T):
///   trend mode: a_hat + b_hat * t
///   mean mode:  a_hat * t + level, with a_hat the drift of the differences
struct DetrendResult {
  double a_hat = 0.0;
  double b_hat = 0.0;
  double level = 0.0;
  TrendKind mode_used = TrendKind::mean;
  double statistic = 0.0;  // |m| / gamma_bar
  bool fallback = false;   // long-run variance was negative, mean mode forced

  double deterministic(Eigen::Index t) const;  // t is 1-based
  Vector path(Eigen::Index T) const;
};

/// Drift statistic |mean(dy)| / gamma_bar with
/// gamma_bar^2 = (1/T) * (g0 + 2 sum_{j=1}^J (1 - j/(J+1)) g_j), g_j the lag-j
/// autocovariance of dy. Returns 0 when both the drift and the variance vanish.
double drift_statistic(const Vector& y, int max_lag, bool* negative_variance = nullptr);

struct Detrended {
  DetrendResult result;
  Vector residual;
};

Detrended detrend(const Vector& y, DetrendMode mode, const DetrendOptions& opt = {});

Vector add_back_deterministic(const Vector& component, const DetrendResult& det);

}  // namespace nsdfm
