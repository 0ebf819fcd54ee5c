#include "stylecore/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <string>

#include "stylecore/error.hpp"
#include "stylecore/image.hpp"

namespace stylecore {

bool DistanceMatrix::has_forbidden() const {
  return std::any_of(allowed.begin(), allowed.end(), [](unsigned char a) { return a == 0; });
}

namespace {

void require_sets(ad::Var a, ad::Var b) {
  require(a.value().rank() == 2 && b.value().rank() == 2, ErrorKind::ShapeMismatch,
          "distance matrices expect [n, D] inputs");
  require(a.dim(0) > 0 && b.dim(0) > 0, ErrorKind::InvalidArgument, "empty feature set");
  if (a.dim(1) != b.dim(1)) {
    raise(ErrorKind::ShapeMismatch, "feature dims differ: " + std::to_string(a.dim(1)) + " vs " +
                                        std::to_string(b.dim(1)));
  }
}

ad::Var normalize_rows(ad::Var x, double eps) {
  ad::Var sq = ad::sum(ad::square(x), 1);
  if (eps > 0.0) return ad::div(x, ad::sqrt(ad::add_scalar(sq, eps * eps)));
  ad::Var norms = ad::sqrt(sq);
  for (double v : norms.value().storage()) {
    if (v < 1e-12) raise(ErrorKind::ZeroVector, "cosine distance of a zero-norm feature vector");
  }
  return ad::div(x, norms);
}

}  // namespace

DistanceMatrix cosine_distance_matrix(ad::Var a, ad::Var b, bool center, double norm_eps) {
  require_sets(a, b);
  if (center) {
    a = ad::sub(a, ad::mean(a, 0));
    b = ad::sub(b, ad::mean(b, 0));
  }
  ad::Var sim = ad::matmul_nt(normalize_rows(a, norm_eps), normalize_rows(b, norm_eps));
  return {ad::add_scalar(ad::neg(sim), 1.0), {}, Metric::Cosine};
}

DistanceMatrix euclidean_distance_matrix(ad::Var a, ad::Var b) {
  require_sets(a, b);
  const int n = a.dim(0);
  const int m = b.dim(0);
  const int d = a.dim(1);
  const auto& av = a.value().storage();
  const auto& bv = b.value().storage();
  ad::Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = av[static_cast<std::size_t>(i) * d + k] - bv[static_cast<std::size_t>(j) * d + k];
        s += diff * diff;
      }
      out[static_cast<std::size_t>(i) * m + j] = std::sqrt(s);
    }
  }
  ad::Tape& tape = ad::tape_of({a, b});
  const int ia = a.id();
  const int ib = b.id();
  auto dist = std::make_shared<std::vector<double>>(out.storage());
  ad::Var c = tape.record(std::move(out), {a, b}, [=](ad::Tape& tp, const ad::Tensor& g) {
    ad::Tensor* ga = tp.grad_buffer(ia);
    ad::Tensor* gb = tp.grad_buffer(ib);
    const auto& x = tp.value(ia).storage();
    const auto& y = tp.value(ib).storage();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        const std::size_t e = static_cast<std::size_t>(i) * m + j;
        const double r = (*dist)[e];
        if (r == 0.0 || g[e] == 0.0) continue;
        const double s = g[e] / r;
        for (int k = 0; k < d; ++k) {
          const double diff = x[static_cast<std::size_t>(i) * d + k] - y[static_cast<std::size_t>(j) * d + k];
          if (ga) ga->storage()[static_cast<std::size_t>(i) * d + k] += s * diff;
          if (gb) gb->storage()[static_cast<std::size_t>(j) * d + k] -= s * diff;
        }
      }
    }
  });
  return {c, {}, Metric::Euclidean};
}

namespace {

// Column minima over usable entries, optionally dropping columns that have
// none. Returns a [1, kept] variable.
ad::Var column_minima(const DistanceMatrix& c, bool skip_empty, std::vector<int>& choice) {
  const int n = c.rows();
  const int m = c.cols();
  const auto& x = c.cost.value().storage();
  choice.assign(static_cast<std::size_t>(m), -1);
  std::vector<int> kept;
  std::vector<double> mins;
  for (int j = 0; j < m; ++j) {
    int best = -1;
    double best_v = 0.0;
    for (int i = 0; i < n; ++i) {
      if (c.forbidden(i, j)) continue;
      const double v = x[static_cast<std::size_t>(i) * m + j];
      if (best < 0 || v < best_v) {
        best = i;
        best_v = v;
      }
    }
    if (best < 0) {
      if (skip_empty) continue;
      raise(ErrorKind::Infeasible, "column " + std::to_string(j) + " of the cost matrix is fully forbidden");
    }
    choice[static_cast<std::size_t>(j)] = best;
    kept.push_back(j);
    mins.push_back(best_v);
  }
  if (kept.empty()) raise(ErrorKind::Infeasible, "every column of the cost matrix is forbidden");
  const int k = static_cast<int>(kept.size());
  auto flat = std::make_shared<std::vector<std::size_t>>();
  flat->reserve(kept.size());
  for (int j : kept) flat->push_back(static_cast<std::size_t>(choice[static_cast<std::size_t>(j)]) * m + j);
  const int id = c.cost.id();
  return c.cost.tape()->record(ad::Tensor({1, k}, std::move(mins)), {c.cost},
                               [id, flat](ad::Tape& tp, const ad::Tensor& g) {
                                 ad::Tensor* gc = tp.grad_buffer(id);
                                 if (!gc) return;
                                 for (std::size_t s = 0; s < flat->size(); ++s) gc->storage()[(*flat)[s]] += g[s];
                               });
}

}  // namespace

ad::Var remd(const DistanceMatrix& c, RemdTrace* trace, RemdOptions opts) {
  require(c.cost.valid() && c.cost.value().rank() == 2, ErrorKind::ShapeMismatch, "remd expects an [n, m] matrix");
  require(c.allowed.empty() || c.allowed.size() == c.cost.value().numel(), ErrorKind::ShapeMismatch,
          "forbidden mask does not match the cost matrix");
  ad::ArgReduce rows = ad::min_reduce(c.cost, 1, c.allowed);
  std::vector<int> col_choice;
  ad::Var cols = column_minima(c, opts.skip_unmatched_columns, col_choice);
  ad::Var r_a = ad::mean(rows.value);
  ad::Var r_b = ad::mean(cols);
  if (trace) {
    trace->row_choice = std::move(rows.index);
    trace->col_choice = std::move(col_choice);
    trace->r_a = r_a.value().item();
    trace->r_b = r_b.value().item();
  }
  return ad::maximum(r_a, r_b);
}

// ---- exact EMD: network simplex ------------------------------------------

namespace {

// Primal network simplex on the bipartite transportation network with an
// artificial root. Anti-cycling uses strongly feasible spanning trees; the
// entering arc comes from block search. Supplies are integers (row = m,
// column = -n) so every basic flow is exact.
class NetworkSimplex {
 public:
  NetworkSimplex(int n, int m, const std::vector<double>& cost) : n_(n), m_(m) {
    node_num_ = n + m;
    arc_num_ = n * m;
    const int all_nodes = node_num_ + 1;
    const int all_arcs = arc_num_ + node_num_;
    source_.resize(all_arcs);
    target_.resize(all_arcs);
    cost_.resize(all_arcs);
    flow_.assign(all_arcs, 0);
    state_.assign(all_arcs, kLower);
    parent_.resize(all_nodes);
    pred_.resize(all_nodes);
    thread_.resize(all_nodes);
    rev_thread_.resize(all_nodes);
    succ_num_.resize(all_nodes);
    last_succ_.resize(all_nodes);
    pred_dir_.resize(all_nodes);
    pi_.resize(all_nodes);

    double max_cost = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        const int e = i * m + j;
        source_[e] = i;
        target_[e] = n + j;
        cost_[e] = cost[static_cast<std::size_t>(e)];
        max_cost = std::max(max_cost, std::abs(cost_[e]));
      }
    }
    const double art_cost = (max_cost + 1.0) * node_num_;
    eps_ = 1e-12 * art_cost;

    root_ = node_num_;
    parent_[root_] = -1;
    pred_[root_] = -1;
    thread_[root_] = 0;
    rev_thread_[0] = root_;
    succ_num_[root_] = all_nodes;
    last_succ_[root_] = root_ - 1;
    pi_[root_] = 0.0;
    for (int u = 0, e = arc_num_; u < node_num_; ++u, ++e) {
      parent_[u] = root_;
      pred_[u] = e;
      thread_[u] = u + 1;
      rev_thread_[u + 1] = u;
      succ_num_[u] = 1;
      last_succ_[u] = u;
      state_[e] = kTree;
      if (u < n) {
        pred_dir_[u] = kUp;
        pi_[u] = 0.0;
        source_[e] = u;
        target_[e] = root_;
        flow_[e] = m;
        cost_[e] = 0.0;
      } else {
        pred_dir_[u] = kDown;
        pi_[u] = art_cost;
        source_[e] = root_;
        target_[e] = u;
        flow_[e] = n;
        cost_[e] = art_cost;
      }
    }
    block_size_ = std::max(10, static_cast<int>(std::sqrt(static_cast<double>(arc_num_))));
  }

  void run() {
    const long limit = 50L * static_cast<long>(arc_num_) + 100000L;
    while (find_entering_arc()) {
      find_join_node();
      find_leaving_arc();
      change_flow();
      update_tree_structure();
      update_potential();
      if (++pivots_ > limit) raise(ErrorKind::Infeasible, "network simplex exceeded its pivot limit");
    }
    for (int e = arc_num_; e < arc_num_ + node_num_; ++e) {
      if (flow_[e] != 0) raise(ErrorKind::Infeasible, "transport problem has no feasible plan");
    }
  }

  std::int64_t flow(int e) const { return flow_[static_cast<std::size_t>(e)]; }
  long pivots() const { return pivots_; }

 private:
  static constexpr int kUpper = -1;
  static constexpr int kTree = 0;
  static constexpr int kLower = 1;
  static constexpr int kUp = 1;
  static constexpr int kDown = -1;

  double reduced(int e) const {
    return state_[e] * (cost_[e] + pi_[source_[e]] - pi_[target_[e]]);
  }

  bool find_entering_arc() {
    double best = -eps_;
    int cnt = block_size_;
    int e = next_arc_;
    bool found = false;
    for (int scanned = 0; scanned < arc_num_; ++scanned) {
      const double c = reduced(e);
      if (c < best) {
        best = c;
        in_arc_ = e;
        found = true;
      }
      if (++e == arc_num_) e = 0;
      if (--cnt == 0) {
        if (found) break;
        cnt = block_size_;
      }
    }
    next_arc_ = e;
    return found;
  }

  void find_join_node() {
    int u = source_[in_arc_];
    int v = target_[in_arc_];
    while (u != v) {
      if (succ_num_[u] < succ_num_[v]) {
        u = parent_[u];
      } else {
        v = parent_[v];
      }
    }
    join_ = u;
  }

  void find_leaving_arc() {
    int first;
    int second;
    if (state_[in_arc_] == kLower) {
      first = source_[in_arc_];
      second = target_[in_arc_];
    } else {
      first = target_[in_arc_];
      second = source_[in_arc_];
    }
    constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();
    delta_ = kInf;
    int result = 0;
    for (int u = first; u != join_; u = parent_[u]) {
      const std::int64_t d = pred_dir_[u] == kUp ? flow_[pred_[u]] : kInf;
      if (d < delta_) {
        delta_ = d;
        u_out_ = u;
        result = 1;
      }
    }
    for (int u = second; u != join_; u = parent_[u]) {
      const std::int64_t d = pred_dir_[u] == kDown ? flow_[pred_[u]] : kInf;
      if (d <= delta_ && d != kInf) {
        delta_ = d;
        u_out_ = u;
        result = 2;
      }
    }
    if (result == 0) raise(ErrorKind::Infeasible, "unbounded transport cycle");
    if (result == 1) {
      u_in_ = first;
      v_in_ = second;
    } else {
      u_in_ = second;
      v_in_ = first;
    }
  }

  void change_flow() {
    if (delta_ > 0) {
      const std::int64_t val = state_[in_arc_] * delta_;
      flow_[in_arc_] += val;
      for (int u = source_[in_arc_]; u != join_; u = parent_[u]) flow_[pred_[u]] -= pred_dir_[u] * val;
      for (int u = target_[in_arc_]; u != join_; u = parent_[u]) flow_[pred_[u]] += pred_dir_[u] * val;
    }
    state_[in_arc_] = kTree;
    state_[pred_[u_out_]] = kLower;  // uncapacitated arcs only leave at zero flow
  }

  void update_tree_structure() {
    const int old_rev_thread = rev_thread_[u_out_];
    const int old_succ_num = succ_num_[u_out_];
    const int old_last_succ = last_succ_[u_out_];
    v_out_ = parent_[u_out_];

    if (u_in_ == u_out_) {
      parent_[u_in_] = v_in_;
      pred_[u_in_] = in_arc_;
      pred_dir_[u_in_] = u_in_ == source_[in_arc_] ? kUp : kDown;
      if (thread_[v_in_] != u_out_) {
        int after = thread_[old_last_succ];
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
        after = thread_[v_in_];
        thread_[v_in_] = u_out_;
        rev_thread_[u_out_] = v_in_;
        thread_[old_last_succ] = after;
        rev_thread_[after] = old_last_succ;
      }
    } else {
      const int thread_continue = old_rev_thread == v_in_ ? thread_[old_last_succ] : thread_[v_in_];

      // Re-hang the stem u_in -> ... -> u_out under v_in.
      int stem = u_in_;
      int par_stem = v_in_;
      int last = last_succ_[u_in_];
      int after = thread_[last];
      thread_[v_in_] = u_in_;
      dirty_revs_.clear();
      dirty_revs_.push_back(v_in_);
      while (stem != u_out_) {
        const int next_stem = parent_[stem];
        thread_[last] = next_stem;
        dirty_revs_.push_back(last);

        const int before = rev_thread_[stem];
        thread_[before] = after;
        rev_thread_[after] = before;

        parent_[stem] = par_stem;
        par_stem = stem;
        stem = next_stem;

        last = last_succ_[stem] == last_succ_[par_stem] ? rev_thread_[par_stem] : last_succ_[stem];
        after = thread_[last];
      }
      parent_[u_out_] = par_stem;
      thread_[last] = thread_continue;
      rev_thread_[thread_continue] = last;
      last_succ_[u_out_] = last;

      if (old_rev_thread != v_in_) {
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
      }
      for (int u : dirty_revs_) rev_thread_[thread_[u]] = u;

      int tmp_sc = 0;
      const int tmp_ls = last_succ_[u_out_];
      for (int u = u_out_, p = parent_[u]; u != u_in_; u = p, p = parent_[u]) {
        pred_[u] = pred_[p];
        pred_dir_[u] = -pred_dir_[p];
        tmp_sc += succ_num_[u] - succ_num_[p];
        succ_num_[u] = tmp_sc;
        last_succ_[p] = tmp_ls;
      }
      pred_[u_in_] = in_arc_;
      pred_dir_[u_in_] = u_in_ == source_[in_arc_] ? kUp : kDown;
      succ_num_[u_in_] = old_succ_num;
    }

    const int up_limit_out = last_succ_[join_] == v_in_ ? join_ : -1;
    const int last_succ_out = last_succ_[u_out_];
    for (int u = v_in_; u != -1 && last_succ_[u] == v_in_; u = parent_[u]) last_succ_[u] = last_succ_out;

    if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
      for (int u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u]) {
        last_succ_[u] = old_rev_thread;
      }
    } else if (last_succ_out != old_last_succ) {
      for (int u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u]) {
        last_succ_[u] = last_succ_out;
      }
    }

    for (int u = v_in_; u != join_; u = parent_[u]) succ_num_[u] += old_succ_num;
    for (int u = v_out_; u != join_; u = parent_[u]) succ_num_[u] -= old_succ_num;
  }

  void update_potential() {
    const double sigma = pi_[v_in_] - pi_[u_in_] - pred_dir_[u_in_] * cost_[in_arc_];
    const int end = thread_[last_succ_[u_in_]];
    for (int u = u_in_; u != end; u = thread_[u]) pi_[u] += sigma;
  }

  int n_;
  int m_;
  int node_num_ = 0;
  int arc_num_ = 0;
  int root_ = 0;
  int block_size_ = 10;
  int next_arc_ = 0;
  double eps_ = 0.0;
  long pivots_ = 0;

  std::vector<int> source_;
  std::vector<int> target_;
  std::vector<double> cost_;
  std::vector<std::int64_t> flow_;
  std::vector<int> state_;
  std::vector<int> parent_;
  std::vector<int> pred_;
  std::vector<int> thread_;
  std::vector<int> rev_thread_;
  std::vector<int> succ_num_;
  std::vector<int> last_succ_;
  std::vector<int> pred_dir_;
  std::vector<double> pi_;
  std::vector<int> dirty_revs_;

  int in_arc_ = 0;
  int join_ = 0;
  int u_in_ = 0;
  int v_in_ = 0;
  int u_out_ = 0;
  int v_out_ = 0;
  std::int64_t delta_ = 0;
};

void check_emd_input(const ad::Tensor& cost) {
  require(cost.rank() == 2 && cost.dim(0) > 0 && cost.dim(1) > 0, ErrorKind::ShapeMismatch,
          "exact_emd expects a nonempty [n, m] cost matrix");
  if (cost.numel() > kMaxEmdEntries) {
    raise(ErrorKind::SizeLimit, "exact_emd is limited to " + std::to_string(kMaxEmdEntries) +
                                    " cost entries, got " + std::to_string(cost.numel()));
  }
  for (double v : cost.storage()) {
    if (!std::isfinite(v)) raise(ErrorKind::InvalidArgument, "exact_emd needs finite costs");
  }
}

double plan_cost(const ad::Tensor& cost, const TransportPlan& plan) {
  double total = 0.0;
  for (std::size_t e = 0; e < plan.flow.size(); ++e) total += plan.flow[e] * cost[e];
  return total;
}

}  // namespace

EmdResult exact_emd(const ad::Tensor& cost) {
  check_emd_input(cost);
  const int n = cost.dim(0);
  const int m = cost.dim(1);
  NetworkSimplex solver(n, m, cost.storage());
  solver.run();
  EmdResult r;
  r.pivots = solver.pivots();
  r.plan.rows = n;
  r.plan.cols = m;
  r.plan.flow.resize(cost.numel());
  const double unit = 1.0 / (static_cast<double>(n) * m);
  for (int e = 0; e < n * m; ++e) r.plan.flow[static_cast<std::size_t>(e)] = static_cast<double>(solver.flow(e)) * unit;
  r.cost = plan_cost(cost, r.plan);
  return r;
}

EmdResult exact_emd(const DistanceMatrix& c) {
  if (c.has_forbidden()) raise(ErrorKind::Infeasible, "exact_emd does not accept forbidden entries");
  return exact_emd(c.cost.value());
}

// ---- exact EMD: dense tableau ---------------------------------------------

EmdResult exact_emd_dense_lp(const ad::Tensor& cost) {
  check_emd_input(cost);
  const int n = cost.dim(0);
  const int m = cost.dim(1);
  require(n <= 32 && m <= 32, ErrorKind::SizeLimit, "dense LP oracle is limited to 32 x 32");

  // Rows: n row-sum constraints, then m - 1 column-sum constraints (the last
  // one is implied). Columns: n*m plan variables, one artificial per row, rhs.
  const int vars = n * m;
  const int cons = n + m - 1;
  const int width = vars + cons + 1;
  const int rhs = width - 1;
  std::vector<double> tab(static_cast<std::size_t>(cons) * width, 0.0);
  auto at = [&](int r, int c) -> double& { return tab[static_cast<std::size_t>(r) * width + c]; };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) at(i, i * m + j) = 1.0;
    at(i, rhs) = 1.0 / n;
  }
  for (int j = 0; j + 1 < m; ++j) {
    for (int i = 0; i < n; ++i) at(n + j, i * m + j) = 1.0;
    at(n + j, rhs) = 1.0 / m;
  }
  std::vector<int> basis(static_cast<std::size_t>(cons));
  for (int r = 0; r < cons; ++r) {
    at(r, vars + r) = 1.0;
    basis[static_cast<std::size_t>(r)] = vars + r;
  }
  constexpr double kTol = 1e-12;

  auto pivot = [&](int pr, int pc) {
    const double p = at(pr, pc);
    for (int c = 0; c < width; ++c) at(pr, c) /= p;
    for (int r = 0; r < cons; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (int c = 0; c < width; ++c) at(r, c) -= f * at(pr, c);
    }
    basis[static_cast<std::size_t>(pr)] = pc;
  };

  // Bland's rule: lowest-index improving column, ratio ties to the lowest
  // basic index.
  auto solve = [&](const std::vector<double>& obj, int allowed_cols) {
    for (;;) {
      int enter = -1;
      for (int c = 0; c < allowed_cols; ++c) {
        double red = obj[static_cast<std::size_t>(c)];
        for (int r = 0; r < cons; ++r) red -= obj[static_cast<std::size_t>(basis[static_cast<std::size_t>(r)])] * at(r, c);
        if (red < -kTol) {
          enter = c;
          break;
        }
      }
      if (enter < 0) return;
      int leave = -1;
      double best = 0.0;
      for (int r = 0; r < cons; ++r) {
        const double a = at(r, enter);
        if (a <= kTol) continue;
        const double ratio = at(r, rhs) / a;
        if (leave < 0 || ratio < best - kTol ||
            (std::abs(ratio - best) <= kTol && basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)])) {
          leave = r;
          best = ratio;
        }
      }
      if (leave < 0) raise(ErrorKind::Infeasible, "dense LP is unbounded");
      pivot(leave, enter);
    }
  };

  std::vector<double> phase1(static_cast<std::size_t>(vars + cons), 0.0);
  for (int r = 0; r < cons; ++r) phase1[static_cast<std::size_t>(vars + r)] = 1.0;
  solve(phase1, vars + cons);
  for (int r = 0; r < cons; ++r) {
    if (basis[static_cast<std::size_t>(r)] >= vars && at(r, rhs) > 1e-9) {
      raise(ErrorKind::Infeasible, "dense LP found no feasible plan");
    }
  }
  // Drive zero-valued artificials out of the basis where possible.
  for (int r = 0; r < cons; ++r) {
    if (basis[static_cast<std::size_t>(r)] < vars) continue;
    for (int c = 0; c < vars; ++c) {
      if (std::abs(at(r, c)) > 1e-9) {
        pivot(r, c);
        break;
      }
    }
  }
  std::vector<double> phase2(static_cast<std::size_t>(vars + cons), 0.0);
  for (int e = 0; e < vars; ++e) phase2[static_cast<std::size_t>(e)] = cost[static_cast<std::size_t>(e)];
  solve(phase2, vars);

  EmdResult r;
  r.plan.rows = n;
  r.plan.cols = m;
  r.plan.flow.assign(cost.numel(), 0.0);
  for (int row = 0; row < cons; ++row) {
    const int b = basis[static_cast<std::size_t>(row)];
    if (b < vars) r.plan.flow[static_cast<std::size_t>(b)] = std::max(0.0, at(row, rhs));
  }
  r.cost = plan_cost(cost, r.plan);
  return r;
}

// ---- moment and palette losses -------------------------------------------

ad::Var moment_loss(ad::Var a, ad::Var b) {
  require_sets(a, b);
  const double d = a.dim(1);
  ad::Var mu_a = ad::mean(a, 0);
  ad::Var mu_b = ad::mean(b, 0);
  ad::Var ca = ad::sub(a, mu_a);
  ad::Var cb = ad::sub(b, mu_b);
  ad::Var cov_a = ad::scale(ad::matmul(ad::transpose(ca), ca), 1.0 / a.dim(0));
  ad::Var cov_b = ad::scale(ad::matmul(ad::transpose(cb), cb), 1.0 / b.dim(0));
  ad::Var mean_term = ad::scale(ad::sum(ad::abs(ad::sub(mu_a, mu_b))), 1.0 / d);
  ad::Var cov_term = ad::scale(ad::sum(ad::abs(ad::sub(cov_a, cov_b))), 1.0 / (d * d));
  return ad::add(mean_term, cov_term);
}

ad::Var palette_loss(ad::Var out_pixels, ad::Var style_pixels) {
  require(out_pixels.value().rank() == 2 && out_pixels.dim(1) == 3 && style_pixels.value().rank() == 2 &&
              style_pixels.dim(1) == 3,
          ErrorKind::ShapeMismatch, "palette loss expects [n, 3] pixel sets");
  const auto& mat = opponent_matrix();
  ad::Tensor mt({3, 3});
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) mt[static_cast<std::size_t>(c) * 3 + r] = mat[r][c];
  }
  ad::Var basis = out_pixels.tape()->constant(std::move(mt));
  return remd(euclidean_distance_matrix(ad::matmul(out_pixels, basis), ad::matmul(style_pixels, basis)));
}

// ---- guidance ---------------------------------------------------------------

DistanceMatrix apply_guidance_costs(const DistanceMatrix& c, const RegionMembership& g, double beta) {
  const int n = c.rows();
  const int m = c.cols();
  require(g.rows.size() == g.cols.size(), ErrorKind::ShapeMismatch, "region pair lists differ in length");
  if (g.pairs() == 0) return c;
  for (std::size_t k = 0; k < g.pairs(); ++k) {
    require(static_cast<int>(g.rows[k].size()) == n && static_cast<int>(g.cols[k].size()) == m,
            ErrorKind::ShapeMismatch, "region membership does not match the cost matrix");
    require(std::any_of(g.cols[k].begin(), g.cols[k].end(), [](unsigned char v) { return v != 0; }),
            ErrorKind::InvalidArgument, "guidance region pair has an empty style region");
  }
  ad::Tensor factor({n, m}, 1.0);
  std::vector<unsigned char> allowed = c.allowed;
  if (allowed.empty()) allowed.assign(static_cast<std::size_t>(n) * m, 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      bool matched = false;
      bool excluded = false;
      for (std::size_t k = 0; k < g.pairs(); ++k) {
        if (!g.rows[k][static_cast<std::size_t>(i)]) continue;
        if (g.cols[k][static_cast<std::size_t>(j)]) {
          matched = true;
        } else {
          excluded = true;
        }
      }
      const std::size_t e = static_cast<std::size_t>(i) * m + j;
      if (excluded) {
        allowed[e] = 0;
      } else if (matched) {
        factor[e] = beta;
      }
    }
  }
  ad::Var scaled = ad::mul(c.cost, c.cost.tape()->constant(std::move(factor)));
  return {scaled, std::move(allowed), c.metric};
}

}  // namespace stylecore
