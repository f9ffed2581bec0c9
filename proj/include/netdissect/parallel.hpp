// Copyright 2026 The netdissect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <omp.h>

#include "netdissect/activation_store.hpp"

namespace netdissect {

/// A visitor failed; carries the image it failed on.
class ScanError : public std::runtime_error {
public:
    ScanError(std::string image_id, const std::string& what)
        : std::runtime_error("while scanning image " + image_id + ": " + what), image_id_(std::move(image_id)) {}
    const std::string& image_id() const noexcept { return image_id_; }

private:
    std::string image_id_;
};

/// `requested` if positive, else $DISSECT_WORKERS, else the core count.
int resolve_workers(int requested = 0);

namespace detail {

class FirstError {
public:
    void capture(const std::string& image_id) noexcept {
        std::lock_guard lock(mutex_);
        if (failed_) return;
        failed_ = true;
        error_ = std::current_exception();
        image_id_ = image_id;
    }
    bool failed() const noexcept { return failed_.load(std::memory_order_relaxed); }
    [[noreturn]] void rethrow() const {
        try {
            std::rethrow_exception(error_);
        } catch (const ScanError&) {
            throw;
        } catch (const std::exception& e) {
            std::throw_with_nested(ScanError(image_id_, e.what()));
        }
    }

private:
    std::mutex mutex_;
    std::atomic<bool> failed_{false};
    std::exception_ptr error_;
    std::string image_id_;
};

}  // namespace detail

/// Visits every volume exactly once. Each worker owns a private copy of
/// `init`; partials are combined with `merge(into, from)` in worker order.
/// The result is worker-count independent whenever `merge` is commutative
/// and exact (integer counts).
template <typename Partial, typename Visit, typename Merge>
Partial scan(const VolumeSource& source, int workers, const Partial& init, Visit&& visit, Merge&& merge) {
    workers = resolve_workers(workers);
    const auto n = static_cast<std::ptrdiff_t>(source.size());
    std::vector<Partial> partials(static_cast<std::size_t>(workers), init);
    detail::FirstError error;

#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        if (error.failed()) continue;
        const auto idx = static_cast<std::size_t>(i);
        try {
            const auto volume = source.read(idx);
            visit(partials[static_cast<std::size_t>(omp_get_thread_num())], idx, volume);
        } catch (...) {
            error.capture(source.image_id(idx));
        }
    }
    if (error.failed()) error.rethrow();

    Partial result = init;
    for (auto& p : partials) merge(result, std::move(p));
    return result;
}

/// Splits the source into fixed blocks of `block_size` images (independent of
/// the worker count). Each block is folded into a fresh `make_partial(block)`
/// and blocks are merged strictly in block order, so any merge, exact or not,
/// yields the same result for every worker count.
template <typename MakePartial, typename Visit, typename Merge>
auto ordered_reduce(const VolumeSource& source, int workers, std::size_t block_size, MakePartial&& make_partial,
                    Visit&& visit, Merge&& merge) -> decltype(make_partial(std::size_t{})) {
    using Partial = decltype(make_partial(std::size_t{}));
    workers = resolve_workers(workers);
    if (block_size == 0) block_size = 1;
    const std::size_t n = source.size();
    const auto blocks = static_cast<std::ptrdiff_t>((n + block_size - 1) / block_size);

    Partial result = make_partial(std::size_t{0});
    bool result_empty = true;
    std::vector<std::optional<Partial>> pending(static_cast<std::size_t>(blocks));
    std::size_t next_to_merge = 0;
    std::mutex merge_mutex;
    detail::FirstError error;

#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
    for (std::ptrdiff_t b = 0; b < blocks; ++b) {
        if (error.failed()) continue;
        const auto block = static_cast<std::size_t>(b);
        std::size_t idx = block * block_size;
        try {
            Partial partial = make_partial(block);
            const std::size_t end = std::min(n, idx + block_size);
            for (; idx < end; ++idx) visit(partial, idx, source.read(idx));

            std::lock_guard lock(merge_mutex);
            pending[block] = std::move(partial);
            while (next_to_merge < pending.size() && pending[next_to_merge]) {
                if (result_empty) {
                    result = std::move(*pending[next_to_merge]);
                    result_empty = false;
                } else {
                    merge(result, std::move(*pending[next_to_merge]));
                }
                pending[next_to_merge].reset();
                ++next_to_merge;
            }
        } catch (...) {
            error.capture(source.image_id(std::min(idx, n - 1)));
        }
    }
    if (error.failed()) error.rethrow();
    return result;
}

}  // namespace netdissect
