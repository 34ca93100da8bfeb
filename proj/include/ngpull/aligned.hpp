#pragma once

#include <cstddef>
#include <cstdlib>
#include <new>
#include <vector>

namespace ngp {

// 64-byte-aligned vector storage for the numeric hot paths. Constant
// alignment keeps the vectorized loops on one code path (no peel-count or
// alias-version variance), which in turn keeps results bit-identical
// across call sites, chunkings, and thread counts.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::size_t kAlignment = 64;

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        void* p = std::aligned_alloc(kAlignment, ((n * sizeof(T) + kAlignment - 1) / kAlignment) * kAlignment);
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) noexcept { std::free(p); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

template <typename T>
using avec = std::vector<T, AlignedAllocator<T>>;

}  // namespace ngp
