#include "cosrec/alloc_tracker.hpp"

namespace cosrec {

namespace {
thread_local AllocTracker* g_active = nullptr;
}

AllocTracker::AllocTracker() : outer_(g_active) {
  g_active = this;
}

AllocTracker::~AllocTracker() {
  g_active = outer_;
}

bool AllocTracker::active() {
  return g_active != nullptr;
}

void AllocTracker::note_alloc(const void* p, std::size_t bytes) {
  AllocTracker* t = g_active;
  if (t == nullptr || t->paused_) return;
  t->table_.emplace(p, bytes);
  t->live_ += static_cast<std::int64_t>(bytes);
  t->allocs_ += 1;
  if (t->live_ > t->peak_) t->peak_ = t->live_;
}

void AllocTracker::note_free(const void* p) {
  AllocTracker* t = g_active;
  if (t == nullptr) return;
  auto it = t->table_.find(p);
  if (it == t->table_.end()) return;  // not tracked here (input, result, or outer scope)
  t->live_ -= static_cast<std::int64_t>(it->second);
  t->frees_ += 1;
  t->table_.erase(it);
}

AllocTracker::Pause::Pause() {
  if (g_active != nullptr) {
    prev_ = g_active->paused_;
    g_active->paused_ = true;
  }
}

AllocTracker::Pause::~Pause() {
  if (g_active != nullptr) g_active->paused_ = prev_;
}

}  // namespace cosrec
