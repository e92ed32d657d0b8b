#include "neounet/schedule.hpp"

#include <cmath>
#include <string>

#include "neounet/error.hpp"

namespace neounet {

double lr_at(double epoch, double base_lr, double warmup_epochs,
             double total_epochs) {
  if (!(base_lr > 0.0)) {
    throw DomainError("lr_at: base_lr must be positive, got " +
                      std::to_string(base_lr));
  }
  if (!(warmup_epochs >= 0.0) || !(warmup_epochs < total_epochs)) {
    throw DomainError("lr_at: require 0 <= warmup_epochs < total_epochs");
  }
  if (epoch < 0.0 || epoch > total_epochs) {
    throw DomainError("lr_at: epoch " + std::to_string(epoch) +
                      " outside [0, " + std::to_string(total_epochs) + "]");
  }
  if (epoch < warmup_epochs) {
    return base_lr * epoch / warmup_epochs;
  }
  const double progress = (epoch - warmup_epochs) / (total_epochs - warmup_epochs);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

} // namespace neounet
