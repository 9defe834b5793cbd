#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

namespace ghc {

/// Worker threads build items 0..count-1 ahead of the consumer, at most
/// `capacity` beyond the one being consumed. Items come out in index order
/// whatever the thread timing, so results stay deterministic.
template <typename T>
class OrderedPrefetcher {
 public:
  OrderedPrefetcher(std::size_t count, int workers, std::size_t capacity, std::function<T(std::size_t)> make)
      : count_(count), capacity_(capacity == 0 ? 1 : capacity), make_(std::move(make)) {
    for (int w = 0; w < workers; ++w) threads_.emplace_back([this] { run(); });
  }
  OrderedPrefetcher(const OrderedPrefetcher&) = delete;
  OrderedPrefetcher& operator=(const OrderedPrefetcher&) = delete;

  ~OrderedPrefetcher() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  /// Blocks until the next item in order is ready; rethrows a worker's exception.
  T next() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return ready_.count(taken_) > 0; });
    auto node = ready_.extract(taken_);
    ++taken_;
    lock.unlock();
    cv_.notify_all();
    if (node.mapped().error) std::rethrow_exception(node.mapped().error);
    return std::move(node.mapped().value);
  }

 private:
  struct Slot {
    T value{};
    std::exception_ptr error;
  };

  void run() {
    for (;;) {
      std::size_t idx;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return stop_ || claimed_ >= count_ || claimed_ < taken_ + capacity_; });
        if (stop_ || claimed_ >= count_) return;
        idx = claimed_++;
      }
      Slot s;
      try {
        s.value = make_(idx);
      } catch (...) {
        s.error = std::current_exception();
      }
      {
        std::lock_guard<std::mutex> lock(mu_);
        ready_.emplace(idx, std::move(s));
      }
      cv_.notify_all();
    }
  }

  std::size_t count_, capacity_;
  std::function<T(std::size_t)> make_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::size_t, Slot> ready_;
  std::size_t claimed_ = 0, taken_ = 0;
  bool stop_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace ghc
