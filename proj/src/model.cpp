#include "asam/model.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "asam/adam.hpp"
#include "asam/backprop.hpp"
#include "asam/dataset.hpp"
#include "asam/errors.hpp"
#include "asam/json_io.hpp"
#include "asam/random.hpp"
#include "asam/softmax.hpp"

namespace asam {
namespace {

AffineLayer uniform_layer(Rng& rng, int out, int in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  AffineLayer layer;
  const Vector w = uniform_vector(rng, static_cast<Eigen::Index>(out) * in, -bound, bound);
  layer.weight = Eigen::Map<const Matrix>(w.data(), out, in);
  layer.bias = uniform_vector(rng, out, -bound, bound);
  return layer;
}

void check_dims(const ModelDims& d) {
  if (d.visual < 2 || d.text < 2 || d.embed < 2 || d.hidden < 2 || d.classes < 2) {
    throw ConfigError("model dimensions must all be >= 2");
  }
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t mix_words(std::uint64_t h, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint64_t word;
    std::memcpy(&word, data + i, sizeof word);
    h ^= word;
    h *= kFnvPrime;
    h ^= h >> 29;
  }
  return h;
}

std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

nlohmann::json layer_json(const AffineLayer& layer) {
  return {{"weight", io::to_json(layer.weight)}, {"bias", io::to_json(layer.bias)}};
}

AffineLayer layer_from_json(const nlohmann::json& doc, const char* name, int out, int in) {
  const std::string where = std::string("model.") + name;
  const auto& j = io::member(doc, name, "model");
  AffineLayer layer;
  layer.weight = io::matrix_from_json(io::member(j, "weight", where), where + ".weight");
  layer.bias = io::vector_from_json(io::member(j, "bias", where), where + ".bias");
  if (layer.weight.rows() != out || layer.weight.cols() != in || layer.bias.size() != out) {
    throw ValidationError(where + ": shape does not match dims");
  }
  if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
    throw ValidationError(where + ": non-finite parameter");
  }
  return layer;
}

}  // namespace

AffineLayer AffineLayer::zeros(int out, int in) {
  return {Matrix::Zero(out, in), Vector::Zero(out)};
}

ToyModel ToyModel::initialized(const ModelDims& dims, std::uint64_t seed) {
  check_dims(dims);
  Rng rng(seed);
  ToyModel m;
  m.dims = dims;
  m.seed = seed;
  m.enc_v = uniform_layer(rng, dims.embed, dims.visual);
  m.enc_t = uniform_layer(rng, dims.embed, dims.text);
  m.pre = uniform_layer(rng, dims.hidden, dims.latent());
  m.edit = uniform_layer(rng, dims.hidden, dims.hidden);
  m.head = uniform_layer(rng, dims.classes, dims.hidden);
  return m;
}

ToyModel ToyModel::zeros(const ModelDims& dims) {
  check_dims(dims);
  ToyModel m;
  m.dims = dims;
  m.enc_v = AffineLayer::zeros(dims.embed, dims.visual);
  m.enc_t = AffineLayer::zeros(dims.embed, dims.text);
  m.pre = AffineLayer::zeros(dims.hidden, dims.latent());
  m.edit = AffineLayer::zeros(dims.hidden, dims.hidden);
  m.head = AffineLayer::zeros(dims.classes, dims.hidden);
  return m;
}

LatentInput ToyModel::encode(const Vector& x_v, const Vector& x_t) const {
  if (x_v.size() != dims.visual || x_t.size() != dims.text) {
    throw ShapeError("encode: expected inputs of length " + std::to_string(dims.visual) + " and " +
                     std::to_string(dims.text));
  }
  LatentInput out;
  out.e_v = enc_v.apply(x_v).array().tanh();
  out.e_t = enc_t.apply(x_t).array().tanh();
  out.z.resize(dims.latent());
  out.z << out.e_v, out.e_t;
  return out;
}

void ToyModel::require_latent(const Vector& z) const {
  if (z.size() != dims.latent()) {
    throw ShapeError("latent has length " + std::to_string(z.size()) + ", expected " +
                     std::to_string(dims.latent()));
  }
}

Vector ToyModel::hidden_at_edit_layer(const Vector& z) const {
  require_latent(z);
  const Vector a = pre.apply(z).array().tanh();
  return edit.apply(a);
}

Vector ToyModel::logits_from_hidden(const Vector& h) const { return head.apply(h); }

Vector ToyModel::forward_from_latent(const Vector& z) const {
  return logits_from_hidden(hidden_at_edit_layer(z));
}

int ToyModel::predict(const Vector& x_v, const Vector& x_t) const { return argmax(forward(x_v, x_t)); }

std::uint64_t checksum(const AffineLayer& layer) {
  std::uint64_t h = kFnvOffset;
  h = mix_words(h, layer.weight.data(), layer.weight.size());
  h = mix_words(h, layer.bias.data(), layer.bias.size());
  return h;
}

std::uint64_t frozen_checksum(const ToyModel& m) {
  std::uint64_t h = checksum(m.enc_v);
  h = combine(h, checksum(m.enc_t));
  h = combine(h, checksum(m.pre));
  return combine(h, checksum(m.head));
}

std::uint64_t parameter_checksum(const ToyModel& m) {
  return combine(frozen_checksum(m), checksum(m.edit));
}

double lipschitz_bound(const ToyModel& m) {
  return linalg::spectral_norm(m.pre.weight) * linalg::spectral_norm(m.edit.weight) *
         linalg::spectral_norm(m.head.weight);
}

double accuracy(const ToyModel& model, const KnowledgeBase& kb) {
  int correct = 0;
  int total = 0;
  for (const auto& unit : kb.units) {
    for (const auto& var : unit.variants) {
      correct += model.predict(var.x_v, var.x_t) == unit.label ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

TrainResult train_base(ToyModel& model, const KnowledgeBase& kb, const TrainOptions& options) {
  if (kb.units.empty()) throw ConfigError("train_base: empty knowledge base");
  if (!(options.lr > 0)) throw ConfigError("train_base: lr must be > 0");
  if (options.epochs < 0 || options.batch_size < 1) throw ConfigError("train_base: invalid schedule");
  if (kb.classes() != model.dims.classes || kb.config.visual != model.dims.visual ||
      kb.config.text != model.dims.text) {
    throw ConfigError("train_base: knowledge base does not match model dims");
  }

  std::vector<SampleRef> samples;
  for (const auto& unit : kb.units) {
    for (int j = 0; j < static_cast<int>(unit.variants.size()); ++j) samples.push_back({unit.unit_id, j});
  }

  AdamParameters adam;
  adam.lr = options.lr;
  AffineLayer* blocks[] = {&model.enc_v, &model.enc_t, &model.pre, &model.edit, &model.head};
  std::vector<AdamState<Matrix>> wstate;
  std::vector<AdamState<Vector>> bstate;
  for (auto* b : blocks) {
    wstate.emplace_back(b->weight);
    bstate.emplace_back(b->bias);
  }

  Rng rng(options.seed);
  long t = 0;
  double epoch_loss = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(samples.begin(), samples.end(), rng);
    epoch_loss = 0;
    for (std::size_t start = 0; start < samples.size(); start += options.batch_size) {
      const std::size_t stop = std::min(samples.size(), start + options.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      ParameterGradients grad = ParameterGradients::zeros(model.dims);
      for (std::size_t s = start; s < stop; ++s) {
        const auto& ref = samples[s];
        const Variant& var = kb.sample(ref.unit_id, ref.variant);
        const int label = kb.unit(ref.unit_id).label;
        const Vector logits = model.forward(var.x_v, var.x_t);
        const double loss = cross_entropy(logits, label);
        if (!std::isfinite(loss)) {
          throw TrainingFailure("non-finite loss at epoch " + std::to_string(epoch));
        }
        epoch_loss += loss;
        grad += grad_all_parameters(model, var.x_v, var.x_t, scale * cross_entropy_grad(logits, label));
      }
      ++t;
      const AffineLayer* grads[] = {&grad.enc_v, &grad.enc_t, &grad.pre, &grad.edit, &grad.head};
      for (std::size_t b = 0; b < 5; ++b) {
        adam_update(grads[b]->weight, wstate[b], blocks[b]->weight, t, adam);
        adam_update(grads[b]->bias, bstate[b], blocks[b]->bias, t, adam);
      }
    }
    epoch_loss /= static_cast<double>(samples.size());
  }

  TrainResult result;
  result.epochs = options.epochs;
  result.final_loss = epoch_loss;
  result.accuracy = accuracy(model, kb);
  return result;
}

nlohmann::json to_json(const ToyModel& m) {
  return {{"dims",
           {{"visual", m.dims.visual},
            {"text", m.dims.text},
            {"embed", m.dims.embed},
            {"hidden", m.dims.hidden},
            {"classes", m.dims.classes}}},
          {"seed", m.seed},
          {"enc_v", layer_json(m.enc_v)},
          {"enc_t", layer_json(m.enc_t)},
          {"pre", layer_json(m.pre)},
          {"edit", layer_json(m.edit)},
          {"head", layer_json(m.head)}};
}

ToyModel model_from_json(const nlohmann::json& doc) {
  const auto& jd = io::member(doc, "dims", "model");
  ModelDims d;
  d.visual = static_cast<int>(io::integer_member(jd, "visual", "model.dims"));
  d.text = static_cast<int>(io::integer_member(jd, "text", "model.dims"));
  d.embed = static_cast<int>(io::integer_member(jd, "embed", "model.dims"));
  d.hidden = static_cast<int>(io::integer_member(jd, "hidden", "model.dims"));
  d.classes = static_cast<int>(io::integer_member(jd, "classes", "model.dims"));
  try {
    check_dims(d);
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("model.dims: ") + e.what());
  }
  ToyModel m;
  m.dims = d;
  m.seed = io::member(doc, "seed", "model").get<std::uint64_t>();
  m.enc_v = layer_from_json(doc, "enc_v", d.embed, d.visual);
  m.enc_t = layer_from_json(doc, "enc_t", d.embed, d.text);
  m.pre = layer_from_json(doc, "pre", d.hidden, d.latent());
  m.edit = layer_from_json(doc, "edit", d.hidden, d.hidden);
  m.head = layer_from_json(doc, "head", d.classes, d.hidden);
  return m;
}

void save_model(const ToyModel& model, const std::filesystem::path& path) {
  io::write_json_file(path, to_json(model));
}

ToyModel load_model(const std::filesystem::path& path) { return model_from_json(io::read_json_file(path)); }

}  // namespace asam
