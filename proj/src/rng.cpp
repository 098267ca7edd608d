#include "ctsnmm/rng.hpp"

#include <cmath>

namespace ctsnmm {

double Rng::exponential(double rate) {
  // u in [0,1) keeps log1p(-u) finite
  return -std::log1p(-uniform()) / rate;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  while (true) {
    double a = 2.0 * uniform() - 1.0;
    double b = 2.0 * uniform() - 1.0;
    double s = a * a + b * b;
    if (s > 0.0 && s < 1.0) {
      double m = std::sqrt(-2.0 * std::log(s) / s);
      spare_ = b * m;
      has_spare_ = true;
      return a * m;
    }
  }
}

}  // namespace ctsnmm
