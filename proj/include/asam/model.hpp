#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "asam/linalg.hpp"

namespace asam {

struct KnowledgeBase;

struct ModelDims {
  int visual = 16;
  int text = 16;
  int embed = 12;
  int hidden = 24;
  int classes = 10;

  int latent() const { return 2 * embed; }
  bool operator==(const ModelDims&) const = default;
};

/// y = weight * x + bias
struct AffineLayer {
  Matrix weight;
  Vector bias;

  static AffineLayer zeros(int out, int in);
  Vector apply(const Vector& x) const { return weight * x + bias; }
  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
  bool operator==(const AffineLayer& other) const {
    return linalg::same_values(weight, other.weight) && linalg::same_values(bias, other.bias);
  }
};

/// Joint latent z = [e_v, e_t].
struct LatentInput {
  Vector e_v;
  Vector e_t;
  Vector z;
};

/// Toy editable multimodal classifier.
///
///   e_v = tanh(enc_v x_v), e_t = tanh(enc_t x_t), z = [e_v, e_t]
///   a = tanh(pre z), h = edit a, logits = head h
///
/// `edit` is the only block that editing operations are allowed to change.
struct ToyModel {
  /// Number of layers between the joint latent and the logits.
  static constexpr int kLatentLayers = 3;

  ModelDims dims;
  std::uint64_t seed = 0;
  AffineLayer enc_v;
  AffineLayer enc_t;
  AffineLayer pre;
  AffineLayer edit;
  AffineLayer head;

  /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from `seed`.
  static ToyModel initialized(const ModelDims& dims, std::uint64_t seed);
  /// Every parameter zero.
  static ToyModel zeros(const ModelDims& dims);

  LatentInput encode(const Vector& x_v, const Vector& x_t) const;
  Vector forward_from_latent(const Vector& z) const;
  Vector hidden_at_edit_layer(const Vector& z) const;
  Vector logits_from_hidden(const Vector& h) const;
  Vector forward(const Vector& x_v, const Vector& x_t) const {
    return forward_from_latent(encode(x_v, x_t).z);
  }
  int predict(const Vector& x_v, const Vector& x_t) const;

  void require_latent(const Vector& z) const;
  bool operator==(const ToyModel&) const = default;
};

/// FNV-1a over the raw bytes of a parameter block.
std::uint64_t checksum(const AffineLayer& layer);
/// Checksum over enc_v, enc_t, pre and head (everything except `edit`).
std::uint64_t frozen_checksum(const ToyModel& model);
/// Checksum over every parameter block.
std::uint64_t parameter_checksum(const ToyModel& model);

/// Product of the spectral norms of pre, edit and head: an upper bound on
/// the Lipschitz constant of forward_from_latent (tanh has slope <= 1).
double lipschitz_bound(const ToyModel& model);

struct TrainOptions {
  int epochs = 300;
  double lr = 1e-2;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

struct TrainResult {
  double accuracy = 0;
  double final_loss = 0;
  int epochs = 0;
};

/// Full-parameter cross-entropy training with minibatch Adam over every
/// variant of every unit. The only operation that touches non-edit blocks.
TrainResult train_base(ToyModel& model, const KnowledgeBase& kb, const TrainOptions& options);

/// Fraction of all kb variants classified as their unit label.
double accuracy(const ToyModel& model, const KnowledgeBase& kb);

nlohmann::json to_json(const ToyModel& model);
ToyModel model_from_json(const nlohmann::json& doc);
void save_model(const ToyModel& model, const std::filesystem::path& path);
ToyModel load_model(const std::filesystem::path& path);

}  // namespace asam
