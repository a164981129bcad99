#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hldet/params.hpp"
#include "hldet/tensor.hpp"

namespace hldet::ad {

/// The complete node set the fusion model needs. The 2-D filter bank over
/// 14x14 maps is an affine map over the 196 flattened values and therefore
/// reuses Dense.
enum class OpKind {
  Input,
  Dense,
  Relu,
  Tanh,
  Sigmoid,
  Concat,
  Dropout,
  Conv1d,
  MaxPool1d,
  BiLstm,
  SumAll,
  MeanAll,
  CccLoss,
  MarginRankLoss,
};

const char* op_kind_name(OpKind kind);

enum class CccVariant { Eq1Literal, LinConcordance };

struct Node {
  OpKind kind = OpKind::Input;
  std::string name;                // unique; appears in error messages
  std::vector<int> inputs;         // upstream node ids
  std::vector<std::string> params; // parameter names this node reads

  Shape input_shape;               // Input: per-example trailing dims
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t kernel = 1;          // Conv1d width, same padding
  std::size_t hidden = 0;          // BiLstm units per direction
  double rate = 0.0;               // Dropout
  double input_dropout = 0.0;      // BiLstm
  double recurrent_dropout = 0.0;  // BiLstm
  CccVariant variant = CccVariant::LinConcordance;
  double margin = 1.0;             // MarginRankLoss
};

/// Batch-index pairs for the ranking head; `first` is the segment whose label
/// is strictly higher.
struct RankPairs {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

struct EvalOptions {
  bool training = false;
  std::uint64_t rng_seed = 0;
  const RankPairs* pairs = nullptr;  // consumed by MarginRankLoss nodes
};

enum class ParamInit { Zeros, GlorotUniform, LstmWeight, LstmBias };

struct ParamDecl {
  std::string name;
  Shape shape;
  ParamInit init = ParamInit::Zeros;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::size_t hidden = 0;  // LstmWeight / LstmBias
};

/// Static computation graph. Nodes are stored in topological order (builders
/// can only reference already-added nodes, so the storage order is the
/// evaluation order). A built graph is immutable in use and shareable across
/// threads; all per-call state lives in ForwardResult.
class Graph {
 public:
  int add_input(const std::string& name, Shape per_example_shape);
  int add_dense(const std::string& name, int input, std::size_t in_dim,
                std::size_t out_dim);
  int add_relu(const std::string& name, int input);
  int add_tanh(const std::string& name, int input);
  int add_sigmoid(const std::string& name, int input);
  int add_concat(const std::string& name, const std::vector<int>& inputs);
  int add_dropout(const std::string& name, int input, double rate);
  int add_conv1d(const std::string& name, int input, std::size_t in_channels,
                 std::size_t out_channels, std::size_t kernel);
  int add_maxpool1d(const std::string& name, int input);
  int add_bilstm(const std::string& name, int input, std::size_t in_dim,
                 std::size_t hidden, double input_dropout,
                 double recurrent_dropout);
  int add_sum_all(const std::string& name, int input);
  int add_mean_all(const std::string& name, int input);
  int add_ccc_loss(const std::string& name, int predictions, int targets,
                   CccVariant variant);
  int add_margin_rank_loss(const std::string& name, int scores, double margin);

  void mark_output(const std::string& output_name, int node);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::pair<std::string, int>>& outputs() const {
    return outputs_;
  }
  int output_node(const std::string& output_name) const;
  const std::vector<ParamDecl>& param_decls() const { return param_decls_; }

  /// Sum of declared parameter sizes; equals init_params(...).total_size().
  std::size_t param_count() const;

  /// Freshly initialized ParamStore. Dense/Conv weights are Glorot-uniform,
  /// LSTM weights uniform in +-1/sqrt(hidden) with forget-gate bias 1, all
  /// other biases zero. Draws are sub-seeded per parameter name.
  ParamStore init_params(std::uint64_t seed) const;

 private:
  int push(Node node);
  void check_input_id(int id) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> outputs_;
  std::vector<ParamDecl> param_decls_;
  std::map<std::string, int> names_;
};

/// Everything forward() computed, kept so backward() can reuse it: node
/// values, dropout masks, pool argmaxes and LSTM gate caches.
struct ForwardResult {
  std::map<std::string, Tensor> outputs;
  std::vector<Tensor> values;             // per node; empty if not evaluated
  std::vector<std::vector<double>> aux;   // per node scratch for backward
  std::vector<char> computed;
  EvalOptions options;
  std::size_t batch = 0;
};

/// Evaluates the graph on named inputs. Only ancestors of `wanted_outputs`
/// run (all declared outputs when empty). Deterministic for fixed
/// (params, inputs, training, rng_seed); with training=false the seed is
/// unused and dropout is the identity. Shape mismatches and non-finite
/// results raise errors naming the offending node.
ForwardResult forward(const Graph& graph, const ParamStore& params,
                      const std::map<std::string, Tensor>& inputs,
                      const EvalOptions& options = {},
                      const std::vector<std::string>& wanted_outputs = {});

/// Reverse pass from a scalar output. Returns one gradient per parameter,
/// zeros for parameters the loss does not reach.
std::map<std::string, Tensor> backward(const Graph& graph,
                                       const ParamStore& params,
                                       const ForwardResult& result,
                                       const std::string& loss_output);

struct GradCheckOptions {
  /// Cap on probed coordinates per parameter tensor; 0 checks every one.
  /// Larger tensors are probed at a deterministic random subset.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  std::string loss_output = "loss";
};

/// Central finite differences against backward(), dropout disabled. Returns
/// the max relative error |a - b| / max(|a|, |b|, 1e-8) over all probed
/// coordinates. Perturbation must lie in [1e-7, 1e-3].
double gradient_check(const Graph& graph, const ParamStore& params,
                      const std::map<std::string, Tensor>& inputs,
                      double perturbation,
                      const GradCheckOptions& options = {});

}  // namespace hldet::ad
