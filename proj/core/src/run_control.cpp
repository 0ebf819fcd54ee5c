#include "stylecore/run_control.hpp"

#include "stylecore/error.hpp"

namespace stylecore {

void RunControl::check_cancelled() const {
  if (cancel && cancel->load(std::memory_order_relaxed)) raise(ErrorKind::Cancelled, "cancelled");
}

}  // namespace stylecore
