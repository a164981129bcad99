#include "hldet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "ccc_math.hpp"
#include "gemm.hpp"
#include "hldet/error.hpp"
#include "hldet/rng.hpp"

namespace hldet::ad {

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Dense: return "dense";
    case OpKind::Relu: return "relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Concat: return "concat";
    case OpKind::Dropout: return "dropout";
    case OpKind::Conv1d: return "conv1d";
    case OpKind::MaxPool1d: return "maxpool1d";
    case OpKind::BiLstm: return "bilstm";
    case OpKind::SumAll: return "sum";
    case OpKind::MeanAll: return "mean";
    case OpKind::CccLoss: return "ccc_loss";
    case OpKind::MarginRankLoss: return "margin_rank_loss";
  }
  return "?";
}

// --- builder ---------------------------------------------------------------

int Graph::push(Node node) {
  if (names_.count(node.name)) {
    throw ContractError("duplicate node name: " + node.name);
  }
  for (int id : node.inputs) check_input_id(id);
  int id = static_cast<int>(nodes_.size());
  names_[node.name] = id;
  nodes_.push_back(std::move(node));
  return id;
}

void Graph::check_input_id(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) {
    throw ContractError("node references unknown input id " + std::to_string(id));
  }
}

int Graph::add_input(const std::string& name, Shape per_example_shape) {
  Node n;
  n.kind = OpKind::Input;
  n.name = name;
  n.input_shape = std::move(per_example_shape);
  return push(std::move(n));
}

int Graph::add_dense(const std::string& name, int input, std::size_t in_dim,
                     std::size_t out_dim) {
  if (in_dim == 0 || out_dim == 0) {
    throw ContractError("dense " + name + ": dimensions must be positive");
  }
  Node n;
  n.kind = OpKind::Dense;
  n.name = name;
  n.inputs = {input};
  n.in_dim = in_dim;
  n.out_dim = out_dim;
  n.params = {name + ".w", name + ".b"};
  param_decls_.push_back(
      {name + ".w", {in_dim, out_dim}, ParamInit::GlorotUniform, in_dim, out_dim, 0});
  param_decls_.push_back({name + ".b", {out_dim}, ParamInit::Zeros, 0, 0, 0});
  return push(std::move(n));
}

static Node unary(OpKind kind, const std::string& name, int input) {
  Node n;
  n.kind = kind;
  n.name = name;
  n.inputs = {input};
  return n;
}

int Graph::add_relu(const std::string& name, int input) {
  return push(unary(OpKind::Relu, name, input));
}
int Graph::add_tanh(const std::string& name, int input) {
  return push(unary(OpKind::Tanh, name, input));
}
int Graph::add_sigmoid(const std::string& name, int input) {
  return push(unary(OpKind::Sigmoid, name, input));
}
int Graph::add_sum_all(const std::string& name, int input) {
  return push(unary(OpKind::SumAll, name, input));
}
int Graph::add_mean_all(const std::string& name, int input) {
  return push(unary(OpKind::MeanAll, name, input));
}

int Graph::add_concat(const std::string& name, const std::vector<int>& inputs) {
  if (inputs.empty()) throw ContractError("concat " + name + ": no inputs");
  Node n;
  n.kind = OpKind::Concat;
  n.name = name;
  n.inputs = inputs;
  return push(std::move(n));
}

int Graph::add_dropout(const std::string& name, int input, double rate) {
  if (rate < 0.0 || rate > 1.0) {
    throw ContractError("dropout " + name + ": rate must lie in [0, 1]");
  }
  Node n = unary(OpKind::Dropout, name, input);
  n.rate = rate;
  return push(std::move(n));
}

int Graph::add_conv1d(const std::string& name, int input,
                      std::size_t in_channels, std::size_t out_channels,
                      std::size_t kernel) {
  if (kernel == 0 || in_channels == 0 || out_channels == 0) {
    throw ContractError("conv1d " + name + ": dimensions must be positive");
  }
  Node n;
  n.kind = OpKind::Conv1d;
  n.name = name;
  n.inputs = {input};
  n.in_dim = in_channels;
  n.out_dim = out_channels;
  n.kernel = kernel;
  n.params = {name + ".w", name + ".b"};
  param_decls_.push_back({name + ".w",
                          {kernel, in_channels, out_channels},
                          ParamInit::GlorotUniform,
                          kernel * in_channels,
                          kernel * out_channels,
                          0});
  param_decls_.push_back({name + ".b", {out_channels}, ParamInit::Zeros, 0, 0, 0});
  return push(std::move(n));
}

int Graph::add_maxpool1d(const std::string& name, int input) {
  return push(unary(OpKind::MaxPool1d, name, input));
}

int Graph::add_bilstm(const std::string& name, int input, std::size_t in_dim,
                      std::size_t hidden, double input_dropout,
                      double recurrent_dropout) {
  if (in_dim == 0 || hidden == 0) {
    throw ContractError("bilstm " + name + ": dimensions must be positive");
  }
  Node n;
  n.kind = OpKind::BiLstm;
  n.name = name;
  n.inputs = {input};
  n.in_dim = in_dim;
  n.hidden = hidden;
  n.input_dropout = input_dropout;
  n.recurrent_dropout = recurrent_dropout;
  for (const char* dir : {"fw", "bw"}) {
    std::string p = name + "." + dir;
    n.params.push_back(p + ".w");
    n.params.push_back(p + ".u");
    n.params.push_back(p + ".b");
    param_decls_.push_back(
        {p + ".w", {in_dim, 4 * hidden}, ParamInit::LstmWeight, 0, 0, hidden});
    param_decls_.push_back(
        {p + ".u", {hidden, 4 * hidden}, ParamInit::LstmWeight, 0, 0, hidden});
    param_decls_.push_back(
        {p + ".b", {4 * hidden}, ParamInit::LstmBias, 0, 0, hidden});
  }
  return push(std::move(n));
}

int Graph::add_ccc_loss(const std::string& name, int predictions, int targets,
                        CccVariant variant) {
  Node n;
  n.kind = OpKind::CccLoss;
  n.name = name;
  n.inputs = {predictions, targets};
  n.variant = variant;
  return push(std::move(n));
}

int Graph::add_margin_rank_loss(const std::string& name, int scores,
                                double margin) {
  Node n;
  n.kind = OpKind::MarginRankLoss;
  n.name = name;
  n.inputs = {scores};
  n.margin = margin;
  return push(std::move(n));
}

void Graph::mark_output(const std::string& output_name, int node) {
  check_input_id(node);
  for (const auto& [name, id] : outputs_) {
    if (name == output_name) {
      throw ContractError("duplicate output name: " + output_name);
    }
  }
  outputs_.emplace_back(output_name, node);
}

int Graph::output_node(const std::string& output_name) const {
  for (const auto& [name, id] : outputs_) {
    if (name == output_name) return id;
  }
  throw ContractError("unknown graph output: " + output_name);
}

std::size_t Graph::param_count() const {
  std::size_t n = 0;
  for (const auto& d : param_decls_) n += shape_numel(d.shape);
  return n;
}

ParamStore Graph::init_params(std::uint64_t seed) const {
  ParamStore store;
  for (const auto& decl : param_decls_) {
    Tensor t(decl.shape);
    Rng rng(seed_for(seed, "init:" + decl.name));
    switch (decl.init) {
      case ParamInit::Zeros:
        break;
      case ParamInit::GlorotUniform: {
        double bound = std::sqrt(6.0 / static_cast<double>(decl.fan_in + decl.fan_out));
        for (auto& v : t.values) v = rng.uniform(-bound, bound);
        break;
      }
      case ParamInit::LstmWeight: {
        double bound = 1.0 / std::sqrt(static_cast<double>(decl.hidden));
        for (auto& v : t.values) v = rng.uniform(-bound, bound);
        break;
      }
      case ParamInit::LstmBias: {
        // Gate order (i, f, g, o); forget-gate block starts at hidden.
        for (std::size_t i = decl.hidden; i < 2 * decl.hidden; ++i) t[i] = 1.0;
        break;
      }
    }
    store.insert(decl.name, std::move(t));
  }
  return store;
}

// --- forward ---------------------------------------------------------------

namespace {

[[noreturn]] void node_error(const Node& n, const std::string& what) {
  throw ContractError("node " + n.name + " (" + op_kind_name(n.kind) + "): " + what);
}

// A finite sum certifies every element finite (inf/nan propagate through
// addition); one vectorizable pass instead of per-element isfinite.
void check_finite(const Node& n, const Tensor& t) {
  double s = 0.0;
  for (double v : t.values) s += v;
  if (!std::isfinite(s)) {
    throw NumericError("node " + n.name + " (" + op_kind_name(n.kind) +
                       "): non-finite values in output");
  }
}

struct EvalState {
  const Graph& graph;
  const ParamStore& params;
  ForwardResult& result;

  const Tensor& value(int id) const { return result.values[static_cast<std::size_t>(id)]; }

  const Tensor& param(const Node& n, const std::string& name) const {
    if (!params.has(name)) {
      node_error(n, "parameter " + name + " not found in the bound store");
    }
    return params.at(name);
  }
};

void add_bias_rows(double* y, const double* b, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = y + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += b[c];
  }
}

// Rows/last-dim view of a tensor for affine ops: rank-1 tensors are treated
// as a column of scalars, otherwise the last axis is the feature axis.
std::pair<std::size_t, std::size_t> rows_cols(const Tensor& t) {
  if (t.rank() <= 1) return {t.numel(), 1};
  std::size_t cols = t.shape.back();
  return {t.numel() / std::max<std::size_t>(cols, 1), cols};
}

Tensor dense_forward(const EvalState& s, const Node& n) {
  const Tensor& x = s.value(n.inputs[0]);
  auto [rows, cols] = rows_cols(x);
  if (cols != n.in_dim) {
    node_error(n, "input feature dim " + std::to_string(cols) + ", expected " +
                      std::to_string(n.in_dim) + " (input shape " +
                      shape_str(x.shape) + ")");
  }
  const Tensor& w = s.param(n, n.params[0]);
  const Tensor& b = s.param(n, n.params[1]);
  Shape out_shape = x.shape;
  if (out_shape.empty()) out_shape = {1};
  if (x.rank() <= 1) {
    if (n.out_dim > 1) out_shape.push_back(n.out_dim);
  } else {
    out_shape.back() = n.out_dim;
  }
  Tensor y(out_shape);
  detail::gemm(false, false, rows, n.out_dim, n.in_dim, 1.0, x.values.data(),
               n.in_dim, w.values.data(), n.out_dim, 0.0, y.values.data(),
               n.out_dim);
  add_bias_rows(y.values.data(), b.values.data(), rows, n.out_dim);
  return y;
}

Tensor conv1d_forward(const EvalState& s, const Node& n) {
  const Tensor& x = s.value(n.inputs[0]);
  if (x.rank() != 3) {
    node_error(n, "expects [batch, time, channels], got " + shape_str(x.shape));
  }
  std::size_t batch = x.dim(0), time = x.dim(1), cin = x.dim(2);
  if (cin != n.in_dim) {
    node_error(n, "input channels " + std::to_string(cin) + ", expected " +
                      std::to_string(n.in_dim));
  }
  const Tensor& w = s.param(n, n.params[0]);
  const Tensor& b = s.param(n, n.params[1]);
  const std::size_t cout = n.out_dim;
  Tensor y({batch, time, cout});
  const std::ptrdiff_t pad_left = static_cast<std::ptrdiff_t>((n.kernel - 1) / 2);
  for (std::size_t j = 0; j < n.kernel; ++j) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad_left;
    const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -shift));
    const std::ptrdiff_t hi_signed =
        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(time),
                                 static_cast<std::ptrdiff_t>(time) - shift);
    if (hi_signed <= static_cast<std::ptrdiff_t>(lo)) continue;
    const std::size_t hi = static_cast<std::size_t>(hi_signed);
    const double* wj = w.values.data() + j * cin * cout;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const std::size_t x_start =
          static_cast<std::size_t>(static_cast<std::ptrdiff_t>(lo) + shift);
      const double* xrow = x.values.data() + (bi * time + x_start) * cin;
      double* yrow = y.values.data() + (bi * time + lo) * cout;
      detail::gemm(false, false, hi - lo, cout, cin, 1.0, xrow, cin, wj, cout,
                   1.0, yrow, cout);
    }
  }
  add_bias_rows(y.values.data(), b.values.data(), batch * time, cout);
  return y;
}

Tensor maxpool_forward(const EvalState& s, const Node& n, std::vector<double>& aux) {
  const Tensor& x = s.value(n.inputs[0]);
  if (x.rank() != 3) {
    node_error(n, "expects [batch, time, channels], got " + shape_str(x.shape));
  }
  std::size_t batch = x.dim(0), time = x.dim(1), ch = x.dim(2);
  if (time < 2) node_error(n, "needs at least 2 time steps");
  std::size_t out_t = time / 2;  // a trailing odd frame is dropped
  Tensor y({batch, out_t, ch});
  aux.assign(batch * out_t * ch, 0.0);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t t = 0; t < out_t; ++t) {
      const double* a = x.values.data() + (bi * time + 2 * t) * ch;
      const double* b = a + ch;
      double* o = y.values.data() + (bi * out_t + t) * ch;
      double* sel = aux.data() + (bi * out_t + t) * ch;
      for (std::size_t c = 0; c < ch; ++c) {
        // Ties keep the earlier frame.
        if (b[c] > a[c]) {
          o[c] = b[c];
          sel[c] = 1.0;
        } else {
          o[c] = a[c];
        }
      }
    }
  }
  return y;
}

// Aux layout per direction block (d = 0 forward, 1 backward-in-time):
//   in_mask  [batch, in]      (1.0 everywhere when dropout inactive)
//   rec_mask [batch, hidden]
//   gates    [batch, time, 4*hidden]  post-activation (i, f, g, o)
//   cells    [batch, time, hidden]
//   hiddens  [batch, time, hidden]
struct LstmAux {
  std::size_t batch, time, in, hidden;
  double* base;
  std::size_t dir_stride;

  LstmAux(std::vector<double>& aux, std::size_t b, std::size_t t, std::size_t c,
          std::size_t h, bool allocate)
      : batch(b), time(t), in(c), hidden(h) {
    dir_stride = b * c + b * h + b * t * 4 * h + 2 * b * t * h;
    if (allocate) aux.assign(2 * dir_stride, 0.0);
    base = aux.data();
  }
  double* in_mask(int d) { return base + d * dir_stride; }
  double* rec_mask(int d) { return in_mask(d) + batch * in; }
  double* gates(int d) { return rec_mask(d) + batch * hidden; }
  double* cells(int d) { return gates(d) + batch * time * 4 * hidden; }
  double* hiddens(int d) { return cells(d) + batch * time * hidden; }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_dropout_mask(double* mask, std::size_t n, double rate, Rng& rng) {
  if (rate <= 0.0) {
    std::fill(mask, mask + n, 1.0);
    return;
  }
  const double scale = rate < 1.0 ? 1.0 / (1.0 - rate) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : scale;
  }
}

Tensor bilstm_forward(const EvalState& s, const Node& n, std::vector<double>& aux,
                      const EvalOptions& options) {
  const Tensor& x = s.value(n.inputs[0]);
  if (x.rank() != 3) {
    node_error(n, "expects [batch, time, features], got " + shape_str(x.shape));
  }
  const std::size_t batch = x.dim(0), time = x.dim(1), cin = x.dim(2);
  if (cin != n.in_dim) {
    node_error(n, "input feature dim " + std::to_string(cin) + ", expected " +
                      std::to_string(n.in_dim));
  }
  if (time == 0) node_error(n, "empty time axis");
  const std::size_t h = n.hidden;
  LstmAux a(aux, batch, time, cin, h, /*allocate=*/true);

  Tensor y({batch, 2 * h});
  std::vector<double> xm(batch * time * cin);
  std::vector<double> xw(batch * time * 4 * h);
  std::vector<double> z(batch * 4 * h);
  std::vector<double> hm(batch * h);

  for (int d = 0; d < 2; ++d) {
    const std::string prefix = n.name + (d == 0 ? ".fw" : ".bw");
    const Tensor& w = s.param(n, prefix + ".w");
    const Tensor& u = s.param(n, prefix + ".u");
    const Tensor& b = s.param(n, prefix + ".b");

    double* in_mask = a.in_mask(d);
    double* rec_mask = a.rec_mask(d);
    if (options.training) {
      Rng rng(seed_for(options.rng_seed, "lstm:" + prefix));
      fill_dropout_mask(in_mask, batch * cin, n.input_dropout, rng);
      fill_dropout_mask(rec_mask, batch * h, n.recurrent_dropout, rng);
    } else {
      std::fill(in_mask, in_mask + batch * cin, 1.0);
      std::fill(rec_mask, rec_mask + batch * h, 1.0);
    }

    // Input projections for every step in one multiply. The input-dropout
    // mask is constant across time (per batch row), applied before w.
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const double* m = in_mask + bi * cin;
      for (std::size_t t = 0; t < time; ++t) {
        const double* src = x.values.data() + (bi * time + t) * cin;
        double* dst = xm.data() + (bi * time + t) * cin;
        for (std::size_t c = 0; c < cin; ++c) dst[c] = src[c] * m[c];
      }
    }
    detail::gemm(false, false, batch * time, 4 * h, cin, 1.0, xm.data(), cin,
                 w.values.data(), 4 * h, 0.0, xw.data(), 4 * h);

    double* gates = a.gates(d);
    double* cells = a.cells(d);
    double* hiddens = a.hiddens(d);
    std::vector<double> h_prev(batch * h, 0.0), c_prev(batch * h, 0.0);

    for (std::size_t step = 0; step < time; ++step) {
      const std::size_t t = d == 0 ? step : time - 1 - step;
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* src = xw.data() + (bi * time + t) * 4 * h;
        double* dst = z.data() + bi * 4 * h;
        for (std::size_t k = 0; k < 4 * h; ++k) dst[k] = src[k] + b[k];
        const double* hp = h_prev.data() + bi * h;
        const double* rm = rec_mask + bi * h;
        double* hmrow = hm.data() + bi * h;
        for (std::size_t k = 0; k < h; ++k) hmrow[k] = hp[k] * rm[k];
      }
      detail::gemm(false, false, batch, 4 * h, h, 1.0, hm.data(), h,
                   u.values.data(), 4 * h, 1.0, z.data(), 4 * h);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        double* zr = z.data() + bi * 4 * h;
        double* g_out = gates + (bi * time + t) * 4 * h;
        double* c_out = cells + (bi * time + t) * h;
        double* h_out = hiddens + (bi * time + t) * h;
        double* cp = c_prev.data() + bi * h;
        double* hp = h_prev.data() + bi * h;
        for (std::size_t k = 0; k < h; ++k) {
          const double gi = sigmoid(zr[k]);
          const double gf = sigmoid(zr[h + k]);
          const double gg = std::tanh(zr[2 * h + k]);
          const double go = sigmoid(zr[3 * h + k]);
          const double c = gf * cp[k] + gi * gg;
          const double hv = go * std::tanh(c);
          g_out[k] = gi;
          g_out[h + k] = gf;
          g_out[2 * h + k] = gg;
          g_out[3 * h + k] = go;
          c_out[k] = c;
          h_out[k] = hv;
          cp[k] = c;
          hp[k] = hv;
        }
      }
    }
    // Final state: last step processed (t = time-1 forward, t = 0 backward).
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t k = 0; k < h; ++k) {
        y[bi * 2 * h + d * h + k] = h_prev[bi * h + k];
      }
    }
  }
  return y;
}

std::vector<double> flat_scores(const EvalState& s, const Node& n, int input_id) {
  const Tensor& t = s.value(input_id);
  if (t.rank() > 2 || (t.rank() == 2 && t.dim(1) != 1)) {
    node_error(n, "expects a score vector [batch] or [batch, 1], got " +
                      shape_str(t.shape));
  }
  return t.values;
}

}  // namespace

ForwardResult forward(const Graph& graph, const ParamStore& params,
                      const std::map<std::string, Tensor>& inputs,
                      const EvalOptions& options,
                      const std::vector<std::string>& wanted_outputs) {
  const auto& nodes = graph.nodes();
  ForwardResult result;
  result.options = options;
  result.values.resize(nodes.size());
  result.aux.resize(nodes.size());
  result.computed.assign(nodes.size(), 0);

  // Ancestor closure of the requested outputs.
  std::vector<char> needed(nodes.size(), 0);
  if (wanted_outputs.empty()) {
    for (const auto& [name, id] : graph.outputs()) needed[static_cast<std::size_t>(id)] = 1;
  } else {
    for (const auto& name : wanted_outputs) {
      needed[static_cast<std::size_t>(graph.output_node(name))] = 1;
    }
  }
  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (!needed[i]) continue;
    for (int in : nodes[i].inputs) needed[static_cast<std::size_t>(in)] = 1;
  }

  std::size_t batch = 0;
  bool batch_known = false;

  EvalState state{graph, params, result};
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!needed[i]) continue;
    const Node& n = nodes[i];
    Tensor out;
    switch (n.kind) {
      case OpKind::Input: {
        auto it = inputs.find(n.name);
        if (it == inputs.end()) node_error(n, "input tensor not provided");
        const Tensor& x = it->second;
        if (x.rank() != n.input_shape.size() + 1) {
          node_error(n, "expected batched shape [n]+" + shape_str(n.input_shape) +
                            ", got " + shape_str(x.shape));
        }
        for (std::size_t k = 0; k < n.input_shape.size(); ++k) {
          if (x.shape[k + 1] != n.input_shape[k]) {
            node_error(n, "expected batched shape [n]+" + shape_str(n.input_shape) +
                              ", got " + shape_str(x.shape));
          }
        }
        if (x.dim(0) == 0) node_error(n, "empty batch");
        if (batch_known && x.dim(0) != batch) {
          node_error(n, "batch size " + std::to_string(x.dim(0)) +
                            " disagrees with other inputs (" + std::to_string(batch) + ")");
        }
        batch = x.dim(0);
        batch_known = true;
        out = x;
        break;
      }
      case OpKind::Dense:
        out = dense_forward(state, n);
        break;
      case OpKind::Relu: {
        out = state.value(n.inputs[0]);
        for (auto& v : out.values) v = v > 0.0 ? v : 0.0;
        break;
      }
      case OpKind::Tanh: {
        out = state.value(n.inputs[0]);
        for (auto& v : out.values) v = std::tanh(v);
        break;
      }
      case OpKind::Sigmoid: {
        out = state.value(n.inputs[0]);
        for (auto& v : out.values) v = sigmoid(v);
        break;
      }
      case OpKind::Concat: {
        const Tensor& first = state.value(n.inputs[0]);
        if (first.rank() == 0) node_error(n, "cannot concatenate scalars");
        Shape lead(first.shape.begin(), first.shape.end() - 1);
        std::size_t total_last = 0;
        for (int id : n.inputs) {
          const Tensor& t = state.value(id);
          if (t.rank() != first.rank() ||
              !std::equal(lead.begin(), lead.end(), t.shape.begin())) {
            node_error(n, "input shapes disagree on leading dims: " +
                              shape_str(first.shape) + " vs " + shape_str(t.shape));
          }
          total_last += t.shape.back();
        }
        Shape out_shape = lead;
        out_shape.push_back(total_last);
        out = Tensor(out_shape);
        const std::size_t rows = shape_numel(lead);
        std::size_t col_off = 0;
        for (int id : n.inputs) {
          const Tensor& t = state.value(id);
          const std::size_t w = t.shape.back();
          for (std::size_t r = 0; r < rows; ++r) {
            std::memcpy(out.values.data() + r * total_last + col_off,
                        t.values.data() + r * w, w * sizeof(double));
          }
          col_off += w;
        }
        break;
      }
      case OpKind::Dropout: {
        const Tensor& x = state.value(n.inputs[0]);
        out = x;
        if (options.training && n.rate > 0.0) {
          auto& mask = result.aux[i];
          mask.resize(x.numel());
          Rng rng(seed_for(options.rng_seed, "dropout:" + n.name));
          fill_dropout_mask(mask.data(), x.numel(), n.rate, rng);
          for (std::size_t k = 0; k < x.numel(); ++k) out.values[k] = x[k] * mask[k];
        }
        break;
      }
      case OpKind::Conv1d:
        out = conv1d_forward(state, n);
        break;
      case OpKind::MaxPool1d:
        out = maxpool_forward(state, n, result.aux[i]);
        break;
      case OpKind::BiLstm:
        out = bilstm_forward(state, n, result.aux[i], options);
        break;
      case OpKind::SumAll:
      case OpKind::MeanAll: {
        const Tensor& x = state.value(n.inputs[0]);
        double s = 0.0;
        for (double v : x.values) s += v;
        if (n.kind == OpKind::MeanAll && x.numel() > 0) {
          s /= static_cast<double>(x.numel());
        }
        out = Tensor::scalar(s);
        break;
      }
      case OpKind::CccLoss: {
        std::vector<double> preds = flat_scores(state, n, n.inputs[0]);
        std::vector<double> targets = flat_scores(state, n, n.inputs[1]);
        if (preds.size() != targets.size()) {
          node_error(n, "prediction/target length mismatch");
        }
        if (preds.size() < 2) node_error(n, "needs at least 2 scores");
        detail::CccMoments mom = detail::ccc_moments(targets, preds);
        const double eps = options.training ? 1e-8 : 0.0;
        if (!options.training && mom.denom() == 0.0) {
          throw NumericError("node " + n.name +
                             " (ccc_loss): degenerate denominator, both "
                             "sequences constant with equal means");
        }
        out = Tensor::scalar(1.0 - detail::ccc_value(mom, n.variant, eps));
        break;
      }
      case OpKind::MarginRankLoss: {
        std::vector<double> scores = flat_scores(state, n, n.inputs[0]);
        double total = 0.0;
        if (options.pairs) {
          for (const auto& [hi, lo] : options.pairs->pairs) {
            if (hi >= scores.size() || lo >= scores.size()) {
              node_error(n, "pair index out of range");
            }
            const double m = n.margin - scores[hi] + scores[lo];
            if (m > 0.0) total += m;
          }
        }
        out = Tensor::scalar(total);
        break;
      }
    }
    check_finite(n, out);
    result.values[i] = std::move(out);
    result.computed[i] = 1;
  }

  result.batch = batch;
  for (const auto& [name, id] : graph.outputs()) {
    if (result.computed[static_cast<std::size_t>(id)]) {
      result.outputs[name] = result.values[static_cast<std::size_t>(id)];
    }
  }
  return result;
}

// --- backward ----------------------------------------------------------------

namespace {

void dense_backward(const EvalState& s, const Node& n, const Tensor& dy,
                    Tensor& dx, std::map<std::string, Tensor>& grads) {
  const Tensor& x = s.value(n.inputs[0]);
  auto [rows, cols] = rows_cols(x);
  const Tensor& w = s.param(n, n.params[0]);
  Tensor& dw = grads.at(n.params[0]);
  Tensor& db = grads.at(n.params[1]);
  // dW += X^T dY ; db += column sums ; dX = dY W^T
  detail::gemm(true, false, n.in_dim, n.out_dim, rows, 1.0, x.values.data(),
               n.in_dim, dy.values.data(), n.out_dim, 1.0, dw.values.data(),
               n.out_dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = dy.values.data() + r * n.out_dim;
    for (std::size_t c = 0; c < n.out_dim; ++c) db[c] += row[c];
  }
  detail::gemm(false, true, rows, n.in_dim, n.out_dim, 1.0, dy.values.data(),
               n.out_dim, w.values.data(), n.out_dim, 1.0, dx.values.data(),
               n.in_dim);
}

void conv1d_backward(const EvalState& s, const Node& n, const Tensor& dy,
                     Tensor& dx, std::map<std::string, Tensor>& grads) {
  const Tensor& x = s.value(n.inputs[0]);
  const std::size_t batch = x.dim(0), time = x.dim(1), cin = n.in_dim,
                    cout = n.out_dim;
  const Tensor& w = s.param(n, n.params[0]);
  Tensor& dw = grads.at(n.params[0]);
  Tensor& db = grads.at(n.params[1]);
  for (std::size_t r = 0; r < batch * time; ++r) {
    const double* row = dy.values.data() + r * cout;
    for (std::size_t c = 0; c < cout; ++c) db[c] += row[c];
  }
  const std::ptrdiff_t pad_left = static_cast<std::ptrdiff_t>((n.kernel - 1) / 2);
  for (std::size_t j = 0; j < n.kernel; ++j) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad_left;
    const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -shift));
    const std::ptrdiff_t hi_signed =
        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(time),
                                 static_cast<std::ptrdiff_t>(time) - shift);
    if (hi_signed <= static_cast<std::ptrdiff_t>(lo)) continue;
    const std::size_t hi = static_cast<std::size_t>(hi_signed);
    const double* wj = w.values.data() + j * cin * cout;
    double* dwj = dw.values.data() + j * cin * cout;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const std::size_t x_start =
          static_cast<std::size_t>(static_cast<std::ptrdiff_t>(lo) + shift);
      const double* xrow = x.values.data() + (bi * time + x_start) * cin;
      const double* dyrow = dy.values.data() + (bi * time + lo) * cout;
      double* dxrow = dx.values.data() + (bi * time + x_start) * cin;
      // dW_j += X_shifted^T dY ; dX_shifted += dY W_j^T
      detail::gemm(true, false, cin, cout, hi - lo, 1.0, xrow, cin, dyrow, cout,
                   1.0, dwj, cout);
      detail::gemm(false, true, hi - lo, cin, cout, 1.0, dyrow, cout, wj, cout,
                   1.0, dxrow, cin);
    }
  }
}

void bilstm_backward(const EvalState& s, const Node& n, std::size_t node_id,
                     const Tensor& dy, Tensor& dx,
                     std::map<std::string, Tensor>& grads) {
  const Tensor& x = s.value(n.inputs[0]);
  const std::size_t batch = x.dim(0), time = x.dim(1), cin = n.in_dim,
                    h = n.hidden;
  LstmAux a(const_cast<std::vector<double>&>(s.result.aux[node_id]), batch,
            time, cin, h, /*allocate=*/false);

  std::vector<double> dh(batch * h), dc(batch * h), dz(batch * 4 * h);
  std::vector<double> xm_t(batch * cin), hm_t(batch * h), dxm_t(batch * cin),
      dhm(batch * h);

  for (int d = 0; d < 2; ++d) {
    const std::string prefix = n.name + (d == 0 ? ".fw" : ".bw");
    const Tensor& w = s.param(n, prefix + ".w");
    const Tensor& u = s.param(n, prefix + ".u");
    Tensor& dw = grads.at(prefix + ".w");
    Tensor& du = grads.at(prefix + ".u");
    Tensor& db = grads.at(prefix + ".b");
    const double* in_mask = a.in_mask(d);
    const double* rec_mask = a.rec_mask(d);
    const double* gates = a.gates(d);
    const double* cells = a.cells(d);
    const double* hiddens = a.hiddens(d);

    // Seed with the gradient of this direction's half of the output.
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t k = 0; k < h; ++k) {
        dh[bi * h + k] = dy[bi * 2 * h + d * h + k];
      }
    }
    std::fill(dc.begin(), dc.end(), 0.0);

    for (std::size_t step = time; step-- > 0;) {
      // Forward direction processed t = step; backward processed reversed.
      const std::size_t t = d == 0 ? step : time - 1 - step;
      const std::size_t t_prev_valid = step > 0;
      const std::size_t t_prev = d == 0 ? t - 1 : t + 1;

      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* g = gates + (bi * time + t) * 4 * h;
        const double* c = cells + (bi * time + t) * h;
        const double* cp =
            t_prev_valid ? cells + (bi * time + t_prev) * h : nullptr;
        double* dhr = dh.data() + bi * h;
        double* dcr = dc.data() + bi * h;
        double* dzr = dz.data() + bi * 4 * h;
        for (std::size_t k = 0; k < h; ++k) {
          const double gi = g[k], gf = g[h + k], gg = g[2 * h + k], go = g[3 * h + k];
          const double tc = std::tanh(c[k]);
          const double cprev = cp ? cp[k] : 0.0;
          const double d_o = dhr[k] * tc;
          dcr[k] += dhr[k] * go * (1.0 - tc * tc);
          const double d_i = dcr[k] * gg;
          const double d_g = dcr[k] * gi;
          const double d_f = dcr[k] * cprev;
          dzr[k] = d_i * gi * (1.0 - gi);
          dzr[h + k] = d_f * gf * (1.0 - gf);
          dzr[2 * h + k] = d_g * (1.0 - gg * gg);
          dzr[3 * h + k] = d_o * go * (1.0 - go);
          dcr[k] *= gf;  // becomes dc_prev
        }
      }

      for (std::size_t k = 0; k < 4 * h; ++k) {
        double acc = 0.0;
        for (std::size_t bi = 0; bi < batch; ++bi) acc += dz[bi * 4 * h + k];
        db[k] += acc;
      }

      // Recreate this step's masked input / masked previous hidden state.
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* xr = x.values.data() + (bi * time + t) * cin;
        const double* im = in_mask + bi * cin;
        double* xmr = xm_t.data() + bi * cin;
        for (std::size_t c = 0; c < cin; ++c) xmr[c] = xr[c] * im[c];
        const double* hp =
            t_prev_valid ? hiddens + (bi * time + t_prev) * h : nullptr;
        const double* rm = rec_mask + bi * h;
        double* hmr = hm_t.data() + bi * h;
        for (std::size_t k = 0; k < h; ++k) hmr[k] = hp ? hp[k] * rm[k] : 0.0;
      }

      detail::gemm(true, false, cin, 4 * h, batch, 1.0, xm_t.data(), cin,
                   dz.data(), 4 * h, 1.0, dw.values.data(), 4 * h);
      detail::gemm(true, false, h, 4 * h, batch, 1.0, hm_t.data(), h, dz.data(),
                   4 * h, 1.0, du.values.data(), 4 * h);

      detail::gemm(false, true, batch, cin, 4 * h, 1.0, dz.data(), 4 * h,
                   w.values.data(), 4 * h, 0.0, dxm_t.data(), cin);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* im = in_mask + bi * cin;
        double* dst = dx.values.data() + (bi * time + t) * cin;
        const double* src = dxm_t.data() + bi * cin;
        for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c] * im[c];
      }

      detail::gemm(false, true, batch, h, 4 * h, 1.0, dz.data(), 4 * h,
                   u.values.data(), 4 * h, 0.0, dhm.data(), h);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* rm = rec_mask + bi * h;
        double* dhr = dh.data() + bi * h;
        const double* src = dhm.data() + bi * h;
        for (std::size_t k = 0; k < h; ++k) dhr[k] = src[k] * rm[k];
      }
    }
  }
}

void scores_grad_to_input(const Tensor& input_value, Tensor& dx,
                          const std::vector<double>& dscores) {
  for (std::size_t i = 0; i < dscores.size(); ++i) dx.values[i] += dscores[i];
  (void)input_value;
}

}  // namespace

std::map<std::string, Tensor> backward(const Graph& graph,
                                       const ParamStore& params,
                                       const ForwardResult& result,
                                       const std::string& loss_output) {
  const auto& nodes = graph.nodes();
  const int loss_id = graph.output_node(loss_output);
  if (!result.computed[static_cast<std::size_t>(loss_id)]) {
    throw ContractError("backward: output " + loss_output +
                        " was not computed by forward");
  }
  if (result.values[static_cast<std::size_t>(loss_id)].numel() != 1) {
    throw ContractError("backward: loss node must be scalar, got shape " +
                        shape_str(result.values[static_cast<std::size_t>(loss_id)].shape));
  }

  std::map<std::string, Tensor> grads;
  for (const auto& decl : graph.param_decls()) {
    grads.emplace(decl.name, Tensor(decl.shape));
  }

  std::vector<Tensor> adjoint(nodes.size());
  std::vector<char> has_adj(nodes.size(), 0);
  auto adj_of = [&](int id) -> Tensor& {
    auto i = static_cast<std::size_t>(id);
    if (!has_adj[i]) {
      adjoint[i] = Tensor(result.values[i].shape);
      has_adj[i] = 1;
    }
    return adjoint[i];
  };
  adj_of(loss_id)[0] = 1.0;

  EvalState state{graph, params, const_cast<ForwardResult&>(result)};

  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (!result.computed[i] || !has_adj[i]) continue;
    const Node& n = nodes[i];
    const Tensor& dy = adjoint[i];
    switch (n.kind) {
      case OpKind::Input:
        break;
      case OpKind::Dense:
        dense_backward(state, n, dy, adj_of(n.inputs[0]), grads);
        break;
      case OpKind::Relu: {
        const Tensor& x = state.value(n.inputs[0]);
        Tensor& dx = adj_of(n.inputs[0]);
        for (std::size_t k = 0; k < x.numel(); ++k) {
          if (x[k] > 0.0) dx[k] += dy[k];
        }
        break;
      }
      case OpKind::Tanh: {
        const Tensor& y = result.values[i];
        Tensor& dx = adj_of(n.inputs[0]);
        for (std::size_t k = 0; k < y.numel(); ++k) {
          dx[k] += dy[k] * (1.0 - y[k] * y[k]);
        }
        break;
      }
      case OpKind::Sigmoid: {
        const Tensor& y = result.values[i];
        Tensor& dx = adj_of(n.inputs[0]);
        for (std::size_t k = 0; k < y.numel(); ++k) {
          dx[k] += dy[k] * y[k] * (1.0 - y[k]);
        }
        break;
      }
      case OpKind::Concat: {
        const Tensor& out = result.values[i];
        const std::size_t total_last = out.shape.back();
        const std::size_t rows = out.numel() / total_last;
        std::size_t col_off = 0;
        for (int id : n.inputs) {
          const Tensor& t = state.value(id);
          Tensor& dx = adj_of(id);
          const std::size_t w = t.shape.back();
          for (std::size_t r = 0; r < rows; ++r) {
            const double* src = dy.values.data() + r * total_last + col_off;
            double* dst = dx.values.data() + r * w;
            for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
          }
          col_off += w;
        }
        break;
      }
      case OpKind::Dropout: {
        Tensor& dx = adj_of(n.inputs[0]);
        const auto& mask = result.aux[i];
        if (mask.empty()) {
          for (std::size_t k = 0; k < dy.numel(); ++k) dx[k] += dy[k];
        } else {
          for (std::size_t k = 0; k < dy.numel(); ++k) dx[k] += dy[k] * mask[k];
        }
        break;
      }
      case OpKind::Conv1d:
        conv1d_backward(state, n, dy, adj_of(n.inputs[0]), grads);
        break;
      case OpKind::MaxPool1d: {
        const Tensor& x = state.value(n.inputs[0]);
        Tensor& dx = adj_of(n.inputs[0]);
        const std::size_t batch = x.dim(0), time = x.dim(1), ch = x.dim(2);
        const std::size_t out_t = time / 2;
        const auto& sel = result.aux[i];
        for (std::size_t bi = 0; bi < batch; ++bi) {
          for (std::size_t t = 0; t < out_t; ++t) {
            const double* g = dy.values.data() + (bi * out_t + t) * ch;
            const double* s_row = sel.data() + (bi * out_t + t) * ch;
            double* d0 = dx.values.data() + (bi * time + 2 * t) * ch;
            for (std::size_t c = 0; c < ch; ++c) {
              d0[c + (s_row[c] > 0.5 ? ch : 0)] += g[c];
            }
          }
        }
        break;
      }
      case OpKind::BiLstm:
        bilstm_backward(state, n, i, dy, adj_of(n.inputs[0]), grads);
        break;
      case OpKind::SumAll: {
        Tensor& dx = adj_of(n.inputs[0]);
        for (auto& v : dx.values) v += dy[0];
        break;
      }
      case OpKind::MeanAll: {
        Tensor& dx = adj_of(n.inputs[0]);
        const double g = dy[0] / static_cast<double>(std::max<std::size_t>(dx.numel(), 1));
        for (auto& v : dx.values) v += g;
        break;
      }
      case OpKind::CccLoss: {
        const Tensor& pred_t = state.value(n.inputs[0]);
        const Tensor& targ_t = state.value(n.inputs[1]);
        detail::CccMoments mom = detail::ccc_moments(targ_t.values, pred_t.values);
        const double eps = result.options.training ? 1e-8 : 0.0;
        std::vector<double> dpred, dtarg;
        detail::ccc_grad(targ_t.values, pred_t.values, mom, n.variant, eps,
                         dtarg, dpred);
        // Loss is 1 - ccc: flip sign, then chain the upstream adjoint.
        const double g = -dy[0];
        for (auto& v : dpred) v *= g;
        for (auto& v : dtarg) v *= g;
        scores_grad_to_input(pred_t, adj_of(n.inputs[0]), dpred);
        scores_grad_to_input(targ_t, adj_of(n.inputs[1]), dtarg);
        break;
      }
      case OpKind::MarginRankLoss: {
        const Tensor& scores_t = state.value(n.inputs[0]);
        std::vector<double> ds(scores_t.numel(), 0.0);
        if (result.options.pairs) {
          for (const auto& [hi, lo] : result.options.pairs->pairs) {
            const double m = n.margin - scores_t[hi] + scores_t[lo];
            if (m > 0.0) {
              ds[hi] -= dy[0];
              ds[lo] += dy[0];
            }
          }
        }
        scores_grad_to_input(scores_t, adj_of(n.inputs[0]), ds);
        break;
      }
    }
  }
  return grads;
}

double gradient_check(const Graph& graph, const ParamStore& params,
                      const std::map<std::string, Tensor>& inputs,
                      double perturbation, const GradCheckOptions& options) {
  if (perturbation < 1e-7 || perturbation > 1e-3) {
    throw ContractError("gradient_check: perturbation must lie in [1e-7, 1e-3]");
  }
  EvalOptions eval;  // dropout disabled
  ParamStore probe = params;
  ForwardResult fwd = forward(graph, probe, inputs, eval, {options.loss_output});
  auto grads = backward(graph, probe, fwd, options.loss_output);

  auto loss_at = [&]() {
    ForwardResult r = forward(graph, probe, inputs, eval, {options.loss_output});
    return r.outputs.at(options.loss_output)[0];
  };

  double max_rel = 0.0;
  for (const auto& decl : graph.param_decls()) {
    Tensor& theta = probe.at(decl.name);
    const Tensor& grad = grads.at(decl.name);
    std::vector<std::size_t> coords;
    if (options.max_coords_per_param == 0 ||
        theta.numel() <= options.max_coords_per_param) {
      coords.resize(theta.numel());
      for (std::size_t k = 0; k < theta.numel(); ++k) coords[k] = k;
    } else {
      // Deterministic subsample without replacement.
      std::vector<std::size_t> all(theta.numel());
      for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
      Rng rng(seed_for(options.seed, "gradcheck:" + decl.name));
      rng.shuffle(all);
      coords.assign(all.begin(),
                    all.begin() + static_cast<std::ptrdiff_t>(options.max_coords_per_param));
    }
    for (std::size_t k : coords) {
      const double saved = theta[k];
      theta[k] = saved + perturbation;
      const double up = loss_at();
      theta[k] = saved - perturbation;
      const double down = loss_at();
      theta[k] = saved;
      const double fd = (up - down) / (2.0 * perturbation);
      const double an = grad[k];
      const double rel =
          std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace hldet::ad
