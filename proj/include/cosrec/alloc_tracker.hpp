#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <unordered_map>

namespace cosrec {

// Scope that counts live heap bytes of tracked buffers (Matrix storage).
// Buffers allocated while a Pause guard is active are call results rather
// than transient working memory and are never counted; inputs created before
// the scope opened are likewise invisible. peak_bytes() is therefore the
// peak transient working set of whatever ran inside the scope.
class AllocTracker {
 public:
  AllocTracker();
  ~AllocTracker();
  AllocTracker(const AllocTracker&) = delete;
  AllocTracker& operator=(const AllocTracker&) = delete;

  std::int64_t peak_bytes() const { return peak_; }
  std::int64_t live_bytes() const { return live_; }
  std::uint64_t alloc_count() const { return allocs_; }
  std::uint64_t release_count() const { return frees_; }

  static bool active();
  static void note_alloc(const void* p, std::size_t bytes);
  static void note_free(const void* p);

  // Marks allocations as results of the enclosing call (not transients).
  class Pause {
   public:
    Pause();
    ~Pause();
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    bool prev_ = false;
  };

 private:
  std::unordered_map<const void*, std::size_t> table_;
  std::int64_t live_ = 0;
  std::int64_t peak_ = 0;
  std::uint64_t allocs_ = 0;
  std::uint64_t frees_ = 0;
  bool paused_ = false;
  AllocTracker* outer_ = nullptr;  // scopes nest; innermost wins
};

template <typename T>
struct TrackedAllocator {
  using value_type = T;

  TrackedAllocator() = default;
  template <typename U>
  TrackedAllocator(const TrackedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    T* p = static_cast<T*>(::operator new(n * sizeof(T)));
    AllocTracker::note_alloc(p, n * sizeof(T));
    return p;
  }

  void deallocate(T* p, std::size_t) noexcept {
    AllocTracker::note_free(p);
    ::operator delete(p);
  }

  template <typename U>
  bool operator==(const TrackedAllocator<U>&) const {
    return true;
  }
};

}  // namespace cosrec
