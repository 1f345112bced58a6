// Exact bounded-Lipschitz distance between atomic measures.
//
// The primal LP (maximize sum c_k phi_k, |phi_k| <= 1, |phi_k - phi_l| <= |z_k - z_l|) is dual to an
// uncapacitated min-cost transshipment problem on the union support plus a ground node reached at
// cost 1 from every atom. Because min(|z - z'|, 2) is a metric, flow only ever needs to travel
// from a surplus atom directly to a deficit atom (or to ground), so in k > 1 dimensions the graph is
// bipartite. In one dimension the sorted chain of neighbours suffices. The flow is found with
// successive shortest paths and the answer is certified by a primal-feasible phi.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>
#include <utility>

#include "palign/errors.hpp"
#include "palign/measures.hpp"

namespace palign {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double euclid(const double* a, const double* b, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double e = a[i] - b[i];
        s += e * e;
    }
    return std::sqrt(s);
}

bool lex_less(const double* a, const double* b, std::size_t k) {
    for (std::size_t i = 0; i < k; ++i) {
        if (a[i] < b[i]) return true;
        if (b[i] < a[i]) return false;
    }
    return false;
}

bool same_point(const double* a, const double* b, std::size_t k) {
    for (std::size_t i = 0; i < k; ++i)
        if (!(a[i] == b[i])) return false;
    return true;
}

// Signed union support sorted lexicographically, equal points merged.
AtomicMeasure signed_union(const AtomicMeasure& mu, const AtomicMeasure& nu) {
    const std::size_t k = mu.dim;
    const std::size_t n = mu.size() + nu.size();
    auto pt = [&](std::size_t i) {
        return i < mu.size() ? mu.points.data() + i * k : nu.points.data() + (i - mu.size()) * k;
    };
    auto w = [&](std::size_t i) { return i < mu.size() ? mu.weights[i] : -nu.weights[i - mu.size()]; };
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return lex_less(pt(a), pt(b), k); });
    AtomicMeasure u(k);
    u.points.reserve(n * k);
    u.weights.reserve(n);
    for (std::size_t r = 0; r < n;) {
        const std::size_t i = order[r];
        // Sum positive and negative parts separately so the merged weight does not depend on
        // which measure came first.
        double plus = 0.0, minus = 0.0;
        std::size_t s = r;
        for (; s < n && same_point(pt(order[s]), pt(i), k); ++s) {
            const double a = w(order[s]);
            (a >= 0.0 ? plus : minus) += a;
        }
        u.add({pt(i), k}, plus + minus);
        r = s;
    }
    return u;
}

AtomicMeasure subsample(const AtomicMeasure& m, std::size_t keep, std::mt19937_64& rng) {
    if (keep >= m.size()) return m;
    std::vector<std::size_t> idx(m.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates with an explicit bounded draw keeps the selection toolchain independent.
    for (std::size_t i = 0; i < keep; ++i) {
        const std::uint64_t span = m.size() - i;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % span;
        std::uint64_t r;
        do r = rng();
        while (r >= limit);
        std::swap(idx[i], idx[i + r % span]);
    }
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
    AtomicMeasure out(m.dim);
    double picked = 0.0;
    for (std::size_t i = 0; i < keep; ++i) picked += m.weights[idx[i]];
    const double scale = picked > 0.0 ? m.mass() / picked : 0.0;
    for (std::size_t i = 0; i < keep; ++i) out.add(m.point(idx[i]), m.weights[idx[i]] * scale);
    return out;
}

class FlowGraph {
public:
    explicit FlowGraph(std::size_t nodes) : head_(nodes + 1, 0), nodes_(nodes) {}

    void add_arc(int u, int v, double cost) { pending_.push_back({u, v, cost}); }

    // Builds the CSR adjacency. Arc 2e is the forward copy of pending arc e, 2e+1 its reverse.
    void finalize() {
        const std::size_t m = pending_.size();
        to_.resize(2 * m);
        from_.resize(2 * m);
        cost_.resize(2 * m);
        cap_.resize(2 * m);
        std::vector<std::size_t> deg(nodes_ + 1, 0);
        for (const auto& a : pending_) {
            ++deg[static_cast<std::size_t>(a.u)];
            ++deg[static_cast<std::size_t>(a.v)];
        }
        head_.assign(nodes_ + 1, 0);
        for (std::size_t i = 0; i < nodes_; ++i) head_[i + 1] = head_[i] + deg[i];
        adj_.resize(2 * m);
        std::vector<std::size_t> fill(head_.begin(), head_.end() - 1);
        for (std::size_t e = 0; e < m; ++e) {
            const auto& a = pending_[e];
            to_[2 * e] = a.v;
            from_[2 * e] = a.u;
            cost_[2 * e] = a.cost;
            cap_[2 * e] = kInf;
            to_[2 * e + 1] = a.u;
            from_[2 * e + 1] = a.v;
            cost_[2 * e + 1] = -a.cost;
            cap_[2 * e + 1] = 0.0;
            adj_[fill[static_cast<std::size_t>(a.u)]++] = 2 * e;
            adj_[fill[static_cast<std::size_t>(a.v)]++] = 2 * e + 1;
        }
        pending_.clear();
        pending_.shrink_to_fit();
    }

    std::size_t nodes() const { return nodes_; }

    // Successive shortest paths from surplus to deficit nodes. Returns the total flow cost.
    double solve(std::vector<double> excess, double tiny) {
        potential_.assign(nodes_, 0.0);
        std::vector<double> dist(nodes_);
        std::vector<std::size_t> pred(nodes_);
        std::vector<char> done(nodes_);
        using Item = std::pair<double, std::size_t>;
        constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
        for (;;) {
            std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
            std::fill(dist.begin(), dist.end(), kInf);
            std::fill(pred.begin(), pred.end(), kNone);
            std::fill(done.begin(), done.end(), 0);
            for (std::size_t v = 0; v < nodes_; ++v)
                if (excess[v] > tiny) {
                    dist[v] = 0.0;
                    heap.push({0.0, v});
                }
            if (heap.empty()) break;
            std::size_t sink = kNone;
            while (!heap.empty()) {
                auto [d, u] = heap.top();
                heap.pop();
                if (done[u]) continue;
                done[u] = 1;
                if (excess[u] < -tiny) {
                    sink = u;
                    break;
                }
                for (std::size_t q = head_[u]; q < head_[u + 1]; ++q) {
                    const std::size_t a = adj_[q];
                    if (!(cap_[a] > 0.0)) continue;
                    const std::size_t v = static_cast<std::size_t>(to_[a]);
                    if (done[v]) continue;
                    const double rc = std::max(0.0, cost_[a] + potential_[u] - potential_[v]);
                    const double nd = d + rc;
                    if (nd < dist[v]) {
                        dist[v] = nd;
                        pred[v] = a;
                        heap.push({nd, v});
                    }
                }
            }
            if (sink == kNone) throw SolverToleranceError("bounded-Lipschitz flow: unbalanced residual network");
            const double dt = dist[sink];
            for (std::size_t v = 0; v < nodes_; ++v) potential_[v] += std::min(dist[v], dt);

            double push = -excess[sink];
            std::size_t v = sink;
            while (pred[v] != kNone) {
                push = std::min(push, cap_[pred[v]]);
                v = static_cast<std::size_t>(from_[pred[v]]);
            }
            const std::size_t source = v;
            push = std::min(push, excess[source]);
            for (v = sink; pred[v] != kNone; v = static_cast<std::size_t>(from_[pred[v]])) {
                const std::size_t a = pred[v];
                cap_[a] -= push;
                if (cap_[a] < tiny) cap_[a] = 0.0;
                cap_[a ^ 1] += push;
            }
            excess[source] -= push;
            excess[sink] += push;
            if (std::abs(excess[source]) <= tiny) excess[source] = 0.0;
            if (std::abs(excess[sink]) <= tiny) excess[sink] = 0.0;
        }
        double total = 0.0;
        for (std::size_t a = 0; a < cost_.size(); a += 2) total += cost_[a] * cap_[a + 1];
        return total;
    }

    // Shortest residual distances from `root` with the original arc costs.
    std::vector<double> distances_from(std::size_t root) const {
        std::vector<double> dist(nodes_, kInf);
        std::vector<char> done(nodes_, 0);
        using Item = std::pair<double, std::size_t>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
        dist[root] = 0.0;
        heap.push({0.0, root});
        while (!heap.empty()) {
            auto [d, u] = heap.top();
            heap.pop();
            if (done[u]) continue;
            done[u] = 1;
            for (std::size_t q = head_[u]; q < head_[u + 1]; ++q) {
                const std::size_t a = adj_[q];
                if (!(cap_[a] > 0.0)) continue;
                const std::size_t v = static_cast<std::size_t>(to_[a]);
                if (done[v]) continue;
                const double nd = d + std::max(0.0, cost_[a] + potential_[u] - potential_[v]);
                if (nd < dist[v]) {
                    dist[v] = nd;
                    heap.push({nd, v});
                }
            }
        }
        for (std::size_t v = 0; v < nodes_; ++v) dist[v] += potential_[v] - potential_[root];
        return dist;
    }

private:
    struct Pending {
        int u, v;
        double cost;
    };
    std::vector<Pending> pending_;
    std::vector<std::size_t> head_;
    std::vector<std::size_t> adj_;
    std::vector<int> to_, from_;
    std::vector<double> cost_, cap_;
    std::vector<double> potential_;
    std::size_t nodes_;
};

}  // namespace

DblResult dbl_solve(const AtomicMeasure& mu_in, const AtomicMeasure& nu_in, const DblOptions& options) {
    if (mu_in.dim != nu_in.dim) throw DomainError("d_BL needs measures of equal dimension");
    if (mu_in.dim == 0) throw DomainError("d_BL needs a positive dimension");
    mu_in.validate();
    nu_in.validate();
    const std::size_t k = mu_in.dim;

    DblResult res;
    AtomicMeasure u = signed_union(mu_in, nu_in);
    if (u.size() > options.support_cap) {
        std::mt19937_64 rng(options.seed);
        const double total = static_cast<double>(mu_in.size() + nu_in.size());
        const std::size_t cap = std::max<std::size_t>(options.support_cap, 2);
        const std::size_t keep_mu =
            std::max<std::size_t>(1, static_cast<std::size_t>(cap * (mu_in.size() / total)));
        const std::size_t keep_nu = std::max<std::size_t>(1, cap - keep_mu);
        u = signed_union(subsample(mu_in, keep_mu, rng), subsample(nu_in, keep_nu, rng));
        res.approximate = true;
    }
    const std::size_t n = u.size();
    res.support_size = n;

    // Canonical orientation: phi -> -phi leaves the value unchanged, so fixing the sign of the first
    // nonzero weight makes d(mu, nu) and d(nu, mu) run the identical computation.
    double orient = 1.0;
    for (double c : u.weights)
        if (c != 0.0) {
            orient = c > 0.0 ? 1.0 : -1.0;
            break;
        }
    std::vector<double> c(u.weights);
    for (double& a : c) a *= orient;

    double scale = 0.0;
    for (double a : c) scale += std::abs(a);
    if (scale == 0.0) {
        res.value = 0.0;
        res.test_function.assign(n, 0.0);
        res.support = std::move(u);
        return res;
    }
    const double tiny = 1e-15 * scale;

    const std::size_t ground = n;
    FlowGraph g(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        g.add_arc(static_cast<int>(i), static_cast<int>(ground), 1.0);
        g.add_arc(static_cast<int>(ground), static_cast<int>(i), 1.0);
    }
    const double* z = u.points.data();
    std::vector<std::size_t> deficit;
    for (std::size_t i = 0; i < n; ++i)
        if (c[i] < 0.0) deficit.push_back(i);
    if (k == 1) {
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double w = z[i + 1] - z[i];
            if (w < 2.0) {
                g.add_arc(static_cast<int>(i), static_cast<int>(i + 1), w);
                g.add_arc(static_cast<int>(i + 1), static_cast<int>(i), w);
            }
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            if (!(c[i] > 0.0)) continue;
            for (std::size_t j : deficit) {
                const double w = euclid(z + i * k, z + j * k, k);
                if (w < 2.0) g.add_arc(static_cast<int>(i), static_cast<int>(j), w);
            }
        }
    }
    g.finalize();

    std::vector<double> excess(n + 1);
    double net = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        excess[i] = c[i];
        net += c[i];
    }
    excess[ground] = -net;
    const double primal = g.solve(excess, tiny);

    // Potentials give phi0 feasible on every arc of the flow graph and tight on arcs carrying flow.
    const std::vector<double> dist = g.distances_from(ground);
    std::vector<double> phi(n);
    for (std::size_t i = 0; i < n; ++i) phi[i] = std::clamp(-dist[i], -1.0, 1.0);
    if (k > 1) {
        // The bipartite graph omits surplus-surplus and deficit-deficit constraints. The transform
        // phi(z) = min(1, min_d phi0_d + |z - z_d|) over deficit atoms is 1-Lipschitz on all of R^k,
        // bounded by 1, and does not lower the objective.
        std::vector<double> phi0 = phi;
        for (std::size_t i = 0; i < n; ++i) {
            double m = 1.0;
            for (std::size_t j : deficit) m = std::min(m, phi0[j] + euclid(z + i * k, z + j * k, k));
            phi[i] = m;
        }
    }

    double dual = 0.0;
    for (std::size_t i = 0; i < n; ++i) dual += c[i] * phi[i];
    double violation = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        violation = std::max(violation, std::abs(phi[i]) - 1.0);
        for (std::size_t j = i + 1; j < n; ++j)
            violation = std::max(violation, std::abs(phi[i] - phi[j]) - euclid(z + i * k, z + j * k, k));
    }
    res.lp_residual = std::max(std::abs(primal - dual), violation);
    if (res.lp_residual > options.tolerance) {
        std::ostringstream msg;
        msg << "bounded-Lipschitz LP residual " << res.lp_residual << " exceeds " << options.tolerance;
        throw SolverToleranceError(msg.str());
    }
    res.value = std::max(0.0, dual);
    for (double& a : phi) a *= orient;
    res.test_function = std::move(phi);
    res.support = std::move(u);
    return res;
}

double dbl_distance(const AtomicMeasure& mu, const AtomicMeasure& nu, const DblOptions& options) {
    return dbl_solve(mu, nu, options).value;
}

}  // namespace palign
