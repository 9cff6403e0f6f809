#include "pixelmod/error.hpp"
#include "pixelmod/ocr.hpp"

namespace pixelmod::ocr {

LabelCache::LabelCache(int max_in_flight) : free_slots_(max_in_flight) {
  if (max_in_flight < 1) {
    throw Error(ErrorCode::kValidation, "max_in_flight must be >= 1");
  }
}

LabelCache::Lookup LabelCache::get_or_extract(
    const hashing::PerceptualHash& hash, const std::function<OcrLabel()>& extract) {
  std::promise<OcrLabel> promise;
  {
    std::unique_lock lock(mutex_);
    auto it = entries_.find(hash);
    if (it != entries_.end()) {
      ++hits_;
      if (it->second.label) {
        return {*it->second.label, true};
      }
      auto pending = it->second.pending;
      lock.unlock();
      return {pending.get(), true};  // coalesced onto the in-flight miss
    }
    ++misses_;
    entries_[hash].pending = promise.get_future().share();
  }

  {
    std::unique_lock slot(slot_mutex_);
    slot_cv_.wait(slot, [this] { return free_slots_ > 0; });
    --free_slots_;
  }
  auto release = [this] {
    {
      std::lock_guard slot(slot_mutex_);
      ++free_slots_;
    }
    slot_cv_.notify_one();
  };

  try {
    OcrLabel label = extract();
    release();
    {
      std::lock_guard lock(mutex_);
      entries_[hash].label = label;
    }
    promise.set_value(label);
    return {std::move(label), false};
  } catch (...) {
    release();
    {
      std::lock_guard lock(mutex_);
      entries_.erase(hash);  // failures are not cached
    }
    promise.set_exception(std::current_exception());
    throw;
  }
}

std::optional<OcrLabel> LabelCache::peek(const hashing::PerceptualHash& hash) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(hash);
  if (it == entries_.end()) {
    return std::nullopt;
  }
  return it->second.label;
}

void LabelCache::put(const hashing::PerceptualHash& hash, OcrLabel label) {
  std::lock_guard lock(mutex_);
  entries_[hash].label = std::move(label);
}

std::uint64_t LabelCache::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

std::uint64_t LabelCache::misses() const {
  std::lock_guard lock(mutex_);
  return misses_;
}

std::size_t LabelCache::size() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [hash, entry] : entries_) {
    n += entry.label ? 1 : 0;
  }
  return n;
}

void LabelCache::reset_counters() {
  std::lock_guard lock(mutex_);
  hits_ = misses_ = 0;
}

LabelCache::Lookup cache_get_or_extract(LabelCache& cache,
                                        const hashing::PerceptualHash& hash,
                                        const ImageSource& image,
                                        OcrProvider& provider) {
  return cache.get_or_extract(hash, [&] { return extract_label(image, provider); });
}

}  // namespace pixelmod::ocr
