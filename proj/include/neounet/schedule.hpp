#pragma once

namespace neounet {

// Warmup + cosine annealing learning-rate schedule.
//
// For epoch < warmup_epochs the rate rises linearly from 0 to base_lr.
// From warmup_epochs onward it follows half a cosine down to exactly 0 at
// total_epochs. `epoch` may be fractional so the rate can be stepped per
// iteration. Throws DomainError for epoch outside [0, total_epochs].
double lr_at(double epoch, double base_lr, double warmup_epochs,
             double total_epochs);

} // namespace neounet
