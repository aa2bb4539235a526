#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace dnspin {

namespace detail {
inline std::atomic<int>& thread_setting() {
    static std::atomic<int> v{0};
    return v;
}
}  // namespace detail

/// 0 means "not set": fall back to DNSPIN_THREADS, then hardware concurrency.
inline void set_threads(int t) { detail::thread_setting() = std::max(0, t); }

inline int num_threads() {
    int t = detail::thread_setting();
    if (t > 0) return t;
    if (const char* e = std::getenv("DNSPIN_THREADS")) {
        try {
            int v = std::stoi(e);
            if (v > 0) return v;
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(i) for i in [0, n) over num_threads() workers, static striping.
/// The first exception thrown by any worker is rethrown.
template <class F>
void parallel_for(int n, F&& f) {
    int T = std::min(num_threads(), std::max(1, n));
    if (T <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::exception_ptr err;
    std::mutex m;
    std::vector<std::thread> ws;
    for (int w = 0; w < T; ++w)
        ws.emplace_back([&, w] {
            try {
                for (int i = w; i < n; i += T) f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(m);
                if (!err) err = std::current_exception();
            }
        });
    for (auto& t : ws) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace dnspin
