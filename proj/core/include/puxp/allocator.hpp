#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace puxp {

/// Training allocates and frees the same multi-megabyte buffers every step.
/// With glibc defaults each of those round-trips through mmap/munmap, which
/// costs as much as the arithmetic. Raising the thresholds keeps them on the
/// heap. Call once at program start; a no-op on other C libraries.
inline void configure_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace puxp
