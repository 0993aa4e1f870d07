#pragma once

namespace disfluent {

/// Process-wide tuning for training workloads, called once from `main`
/// before any worker threads start: large activation buffers are recycled
/// by the allocator instead of being returned to the OS after every op,
/// and subnormal floats are flushed to zero.
void configure_runtime();

}  // namespace disfluent
