#pragma once

#if defined(__SSE__)
#include <immintrin.h>
#endif

namespace fade::nn {

/// Sets flush-to-zero and denormals-are-zero for the current thread and
/// restores the previous mode on exit. Model code runs under this guard on
/// every thread, so results do not depend on which thread computes them.
class ScopedFlushDenormals {
public:
#if defined(__SSE__)
    ScopedFlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | kFlags); }
    ~ScopedFlushDenormals() { _mm_setcsr(saved_); }

private:
    static constexpr unsigned kFlags = 0x8040;  // FTZ | DAZ
    unsigned saved_;
#else
    ScopedFlushDenormals() = default;
#endif
    ScopedFlushDenormals(const ScopedFlushDenormals&) = delete;
    ScopedFlushDenormals& operator=(const ScopedFlushDenormals&) = delete;
};

}  // namespace fade::nn
