#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eisnet/tensor.hpp"

namespace eisnet {

/// A unit-norm embedding with its class label.
template <typename T>
struct BankRecord {
    std::vector<T> v;
    int label = 0;

    friend bool operator==(const BankRecord&, const BankRecord&) = default;
};

/// Immutable view of the bank for one mining pass. Index 0 is the oldest entry.
template <typename T>
using BankSnapshot = std::shared_ptr<const std::vector<BankRecord<T>>>;

inline constexpr double kBankNormTolerance = 1e-4;

/// Fixed-capacity FIFO queue of momentum embeddings.
template <typename T>
class MemoryBank {
public:
    explicit MemoryBank(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw DomainError("memory bank capacity must be positive");
    }

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const BankRecord<T>& operator[](std::size_t i) const { return entries_[i]; }

    /// Appends in order, evicting the oldest entries beyond capacity. Returns the eviction count.
    /// The whole batch is validated before anything is inserted.
    std::size_t push_batch(std::span<const BankRecord<T>> records) {
        for (const auto& r : records) {
            const double n = static_cast<double>(l2_norm(std::span<const T>(r.v)));
            if (!(std::abs(n - 1.0) <= kBankNormTolerance))
                throw DomainError("memory bank: record norm " + std::to_string(n) + " is not unit");
            if (!entries_.empty() && r.v.size() != entries_.front().v.size())
                throw ShapeError("memory bank: embedding dimension mismatch");
        }
        for (const auto& r : records) entries_.push_back(r);
        std::size_t evicted = 0;
        while (entries_.size() > capacity_) {
            entries_.pop_front();
            ++evicted;
        }
        return evicted;
    }

    /// Rows of a B×D embedding matrix paired with labels.
    std::size_t push_batch(const Tensor<T>& embeddings, std::span<const int> labels) {
        require_rank(embeddings, 2, "memory bank push");
        if (labels.size() != embeddings.dim(0)) throw ShapeError("memory bank push: label count mismatch");
        std::vector<BankRecord<T>> recs;
        recs.reserve(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const auto row = embeddings.row(i);
            recs.push_back({std::vector<T>(row.begin(), row.end()), labels[i]});
        }
        return push_batch(std::span<const BankRecord<T>>(recs));
    }

    BankSnapshot<T> snapshot() const {
        return std::make_shared<const std::vector<BankRecord<T>>>(entries_.begin(), entries_.end());
    }

private:
    std::size_t capacity_;
    std::deque<BankRecord<T>> entries_;
};

} // namespace eisnet
