#pragma once

#include <atomic>
#include <functional>

#include "stylecore/image.hpp"

namespace stylecore {

struct ProgressEvent {
  int scale = 0;
  int scales = 0;
  int step = 0;   // 1-based within the scale
  int steps = 0;
  double loss = 0.0;
  /// Current output; set every `preview_every` steps and at the end of a scale.
  const ImageBuffer* preview = nullptr;
};

/// Hooks shared by the optimizers. Cancellation is polled at step
/// boundaries and surfaces as Error(ErrorKind::Cancelled).
struct RunControl {
  std::function<void(const ProgressEvent&)> on_progress;
  const std::atomic<bool>* cancel = nullptr;
  int preview_every = 25;

  void check_cancelled() const;
  bool wants_preview(int step, int steps) const {
    return on_progress && (step == steps || (preview_every > 0 && step % preview_every == 0));
  }
};

}  // namespace stylecore
