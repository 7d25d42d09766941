#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace npsnet {

// Multiply-accumulate bookkeeping. When a MacCounter is installed on the
// current thread, matmul and conv ops add their analytic MAC count:
//   matmul [..,m,p]x[..,p,n]        : batch * m * p * n
//   conv   out voxels, Co, Ci/groups : voxels * Co * (Ci/groups) * kernel volume
// Counts are attributed to the innermost open MacScope, or "(other)".
class MacCounter {
 public:
  void add(std::uint64_t macs) {
    const std::string& key = scopes_.empty() ? other_ : scopes_.back();
    auto it = index_.find(key);
    if (it == index_.end()) {
      index_.emplace(key, entries_.size());
      entries_.emplace_back(key, macs);
    } else {
      entries_[it->second].second += macs;
    }
    total_ += macs;
  }
  void push(std::string name) { scopes_.push_back(std::move(name)); }
  void pop() { scopes_.pop_back(); }

  std::uint64_t total() const { return total_; }
  // In first-seen order.
  const std::vector<std::pair<std::string, std::uint64_t>>& entries() const { return entries_; }

 private:
  std::vector<std::string> scopes_;
  std::vector<std::pair<std::string, std::uint64_t>> entries_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t total_ = 0;
  std::string other_ = "(other)";
};

inline MacCounter*& active_mac_counter() {
  thread_local MacCounter* counter = nullptr;
  return counter;
}

inline void count_macs(std::uint64_t macs) {
  if (auto* c = active_mac_counter()) c->add(macs);
}

class MacCounterScope {
 public:
  explicit MacCounterScope(MacCounter& c) : previous_(active_mac_counter()) { active_mac_counter() = &c; }
  ~MacCounterScope() { active_mac_counter() = previous_; }
  MacCounterScope(const MacCounterScope&) = delete;
  MacCounterScope& operator=(const MacCounterScope&) = delete;

 private:
  MacCounter* previous_;
};

class MacScope {
 public:
  explicit MacScope(const std::string& name) : counter_(active_mac_counter()) {
    if (counter_) counter_->push(name);
  }
  ~MacScope() {
    if (counter_) counter_->pop();
  }
  MacScope(const MacScope&) = delete;
  MacScope& operator=(const MacScope&) = delete;

 private:
  MacCounter* counter_;
};

}  // namespace npsnet
