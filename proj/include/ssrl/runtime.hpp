#pragma once

namespace ssrl {

/// Asks glibc malloc to keep freed blocks instead of returning them to the
/// kernel. Training allocates and frees the same large buffers every step, and
/// without this most of that memory is page-faulted in again each time.
/// Process-wide; a no-op on other C libraries.
void keep_freed_memory();

/// Flushes subnormal results and operands to zero on the calling thread for
/// the lifetime of the object, then restores the previous mode. Training
/// drifts into subnormal gradients and moments, which x86 handles in
/// microcode at a large per-operation cost. No-op without SSE.
class FlushSubnormals {
 public:
  FlushSubnormals();
  ~FlushSubnormals();
  FlushSubnormals(const FlushSubnormals&) = delete;
  FlushSubnormals& operator=(const FlushSubnormals&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace ssrl
