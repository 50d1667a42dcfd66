#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "klnn/cloud.hpp"
#include "klnn/error.hpp"

namespace klnn {

struct Neighbor {
    int index;
    double distance;
};

/// Sorted, truncated neighbor set of one sample. Entries ascend by
/// (distance, index); the center itself is excluded.
struct NeighborList {
    int center = -1;
    int budget = 0;  // requested m
    std::vector<Neighbor> entries;

    /// Distance to the k-th nearest neighbor (1-based).
    double rho(int k) const {
        if (k < 1 || static_cast<std::size_t>(k) > entries.size())
            throw InvalidArgument("NeighborList::rho: k=" + std::to_string(k) +
                                  " exceeds available neighbors (" +
                                  std::to_string(entries.size()) + ")");
        return entries[static_cast<std::size_t>(k) - 1].distance;
    }
};

/// Exact Euclidean k-NN over an immutable sample set. kd-tree for d <= 8,
/// brute force above (splits stop paying off in higher dimensions).
/// Ties are broken by ascending sample index everywhere, so queries are
/// deterministic across platforms and match a brute-force sort oracle.
class NeighborIndex {
public:
    explicit NeighborIndex(const PointCloud& cloud) : cloud_(&cloud) {
        cloud.check_finite();
        if (cloud.d() <= 8 && cloud.n() > 2 * kLeafSize) {
            perm_.resize(static_cast<std::size_t>(cloud.n()));
            std::iota(perm_.begin(), perm_.end(), 0);
            nodes_.reserve(static_cast<std::size_t>(2 * cloud.n()) / kLeafSize + 2);
            root_ = build(0, cloud.n());
        }
    }

    const PointCloud& cloud() const { return *cloud_; }
    bool uses_tree() const { return root_ >= 0; }

    /// m nearest samples to sample i (self excluded, sorted). m > n-1 returns
    /// all n-1 neighbors; that is not an error and shows up as
    /// entries.size() < budget.
    NeighborList knn_of_sample(int i, int m) const {
        if (i < 0 || i >= cloud_->n())
            throw InvalidArgument("knn_of_sample: index out of range");
        if (m < 1) throw InvalidArgument("knn_of_sample: m must be >= 1");
        if (cloud_->n() == 1)
            throw EmptyNeighborhood("knn_of_sample: single-sample cloud has no neighbors");
        NeighborList out;
        out.center = i;
        out.budget = m;
        out.entries = query(cloud_->row(i), m, i);
        return out;
    }

    /// m nearest samples to an arbitrary point; exclude >= 0 drops that
    /// sample index (for resubstitution queries on cloud members).
    std::vector<Neighbor> knn_of_point(std::span<const double> x, int m,
                                       int exclude = -1) const {
        if (m < 1) throw InvalidArgument("knn_of_point: m must be >= 1");
        return query(x, m, exclude);
    }

private:
    static constexpr int kLeafSize = 16;

    struct Node {
        int axis = -1;      // -1 for leaf
        double split = 0.0;
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf range into perm_
    };

    // candidate ordering: (squared distance, index) ascending
    struct Cand {
        double d2;
        int idx;
        bool operator<(const Cand& o) const {
            return d2 != o.d2 ? d2 < o.d2 : idx < o.idx;
        }
    };

    int build(int begin, int end) {
        Node node;
        if (end - begin <= kLeafSize) {
            node.begin = begin;
            node.end = end;
            nodes_.push_back(node);
            return static_cast<int>(nodes_.size()) - 1;
        }
        // split the widest axis at the median of (coordinate, index) pairs;
        // the total order makes the median deterministic under duplicates
        int axis = 0;
        double best_spread = -1.0;
        for (int a = 0; a < cloud_->d(); ++a) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (int p = begin; p < end; ++p) {
                const double v = cloud_->at(perm_[p], a);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > best_spread) {
                best_spread = hi - lo;
                axis = a;
            }
        }
        const int mid = begin + (end - begin) / 2;
        std::nth_element(perm_.begin() + begin, perm_.begin() + mid, perm_.begin() + end,
                         [&](int a, int b) {
                             const double va = cloud_->at(a, axis), vb = cloud_->at(b, axis);
                             return va != vb ? va < vb : a < b;
                         });
        node.axis = axis;
        node.split = cloud_->at(perm_[mid], axis);
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        const int l = build(begin, mid);
        const int r = build(mid, end);
        nodes_[self].left = l;
        nodes_[self].right = r;
        return self;
    }

    std::vector<Neighbor> query(std::span<const double> x, int m, int exclude) const {
        const int n = cloud_->n();
        const int want = std::min(m, exclude >= 0 && exclude < n ? n - 1 : n);
        std::vector<Cand> heap;  // max-heap on Cand ordering
        heap.reserve(static_cast<std::size_t>(want) + 1);
        if (root_ >= 0) {
            search(root_, x, want, exclude, heap);
        } else {
            for (int j = 0; j < n; ++j) {
                if (j == exclude) continue;
                consider({sq_dist(x, cloud_->row(j)), j}, want, heap);
            }
        }
        std::sort(heap.begin(), heap.end());
        std::vector<Neighbor> out;
        out.reserve(heap.size());
        for (const Cand& c : heap) out.push_back({c.idx, std::sqrt(c.d2)});
        return out;
    }

    static void consider(Cand c, int want, std::vector<Cand>& heap) {
        if (static_cast<int>(heap.size()) < want) {
            heap.push_back(c);
            std::push_heap(heap.begin(), heap.end());
        } else if (c < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = c;
            std::push_heap(heap.begin(), heap.end());
        }
    }

    void search(int ni, std::span<const double> x, int want, int exclude,
                std::vector<Cand>& heap) const {
        const Node& node = nodes_[static_cast<std::size_t>(ni)];
        if (node.axis < 0) {
            for (int p = node.begin; p < node.end; ++p) {
                const int j = perm_[static_cast<std::size_t>(p)];
                if (j == exclude) continue;
                consider({sq_dist(x, cloud_->row(j)), j}, want, heap);
            }
            return;
        }
        const double delta = x[static_cast<std::size_t>(node.axis)] - node.split;
        const int near = delta < 0.0 ? node.left : node.right;
        const int far = delta < 0.0 ? node.right : node.left;
        search(near, x, want, exclude, heap);
        // visit the far side unless its closest possible point is strictly
        // worse than the current k-th candidate (<=, so equal-distance
        // smaller-index candidates are still found)
        if (static_cast<int>(heap.size()) < want || delta * delta <= heap.front().d2)
            search(far, x, want, exclude, heap);
    }

    const PointCloud* cloud_ = nullptr;
    std::vector<int> perm_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

inline NeighborIndex build_index(const PointCloud& cloud) { return NeighborIndex(cloud); }

/// Per-sample k-NN radii rho_{k,i} computed in the joint space, for use as
/// coupled bandwidths in the marginal estimators.
inline std::vector<double> coupled_radii(const PointCloud& joint, int k, int m) {
    if (k < 1) throw InvalidArgument("coupled_radii: k must be >= 1");
    if (m < k) throw InvalidArgument("coupled_radii: m must be >= k");
    if (k > joint.n() - 1)
        throw InvalidArgument("coupled_radii: k=" + std::to_string(k) +
                              " exceeds n-1=" + std::to_string(joint.n() - 1));
    NeighborIndex index(joint);
    std::vector<double> radii(static_cast<std::size_t>(joint.n()));
    for (int i = 0; i < joint.n(); ++i)
        radii[static_cast<std::size_t>(i)] =
            index.knn_of_sample(i, std::min(m, joint.n() - 1)).rho(k);
    return radii;
}

}  // namespace klnn
