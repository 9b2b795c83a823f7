#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "tclearn/bytes.hpp"
#include "tclearn/errors.hpp"

namespace tclearn::model {

enum class Activation : std::uint8_t { identity = 0, relu = 1, sigmoid = 2 };
enum class Loss : std::uint8_t { mse = 0, cross_entropy = 1 };

// Network shape shared by the whole coalition and pinned by the genesis
// block: dense layers with bias, `activation` on hidden layers, output
// units decided by the loss (sigmoid/softmax for cross-entropy, linear
// for mse).
struct ArchDescriptor {
    std::vector<std::uint32_t> layer_sizes;
    Activation activation = Activation::sigmoid;
    Loss loss = Loss::cross_entropy;

    void validate() const;
    std::size_t feature_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    std::size_t param_count() const;

    Bytes canonical_encoding() const;
    Hash32 descriptor_hash() const;

    bool operator==(const ArchDescriptor&) const = default;
};

ArchDescriptor parse_arch(ByteView canonical);

// A certified set of parameters. `version` is the index of the block that
// certified it; it is bookkeeping, not part of the canonical encoding, so
// a model's hash is a pure function of architecture and weights.
struct ModelWeights {
    ArchDescriptor arch;
    std::vector<double> weights;
    std::uint64_t version = 0;

    void validate() const;
    Bytes canonical_encoding() const;
    Hash32 hash() const;
};

ModelWeights parse_model(ByteView canonical, std::uint64_t version = 0);

struct GradientUpdate {
    std::uint64_t base_version = 0;
    std::vector<double> deltas;
    std::uint64_t batch_size = 0;
    Id16 contributor{};
};

struct Dataset {
    std::size_t feature_dim = 0;
    std::vector<double> features;  // row-major, size() x feature_dim
    std::vector<double> labels;
    std::vector<Id16> sample_ids;

    std::size_t size() const { return labels.size(); }
    const double* row(std::size_t i) const { return features.data() + i * feature_dim; }
    void validate() const;  // matching row counts, unique ids
    Dataset subset(const std::vector<std::size_t>& indices) const;
};

enum class DatasetKind : std::uint8_t { global = 0, local = 1 };

struct EvalReport {
    double metric = 0.0;  // accuracy in [0, 1], higher is better
    std::uint64_t sample_count = 0;
    DatasetKind dataset_kind = DatasetKind::global;
};

// Genesis parameters: normal draws scaled by 1/sqrt(fan_in), fully
// determined by the seed so any partner can reproduce the genesis model
// from the genesis block.
ModelWeights init_genesis_model(const ArchDescriptor& arch, std::uint64_t seed);

// Deterministic mini-batch gradient descent on a copy of `base`; returns
// the weight deltas. `batch_size` of the update is the row count of the
// training set, which must reach the coalition's minimum.
GradientUpdate train_local(const ModelWeights& base, const Dataset& train,
                           std::uint32_t epochs, double learning_rate, std::uint64_t seed,
                           std::uint64_t min_batch_size, const Id16& contributor);

ModelWeights apply_gradients(const ModelWeights& base, const GradientUpdate& update);

EvalReport evaluate(const ModelWeights& m, const Dataset& test,
                    DatasetKind kind = DatasetKind::global);

// Puts aside round(fraction * n) samples (at least one) as a local test
// set; the rest remain for training. Deterministic given the seed.
std::pair<Dataset, Dataset> split_local_test(const Dataset& data, double fraction,
                                             std::uint64_t seed);

// Mean loss and its analytic gradient, exposed so tests can check the
// trainer against finite differences.
double loss_value(const ModelWeights& m, const Dataset& data);
std::vector<double> loss_gradient(const ModelWeights& m, const Dataset& data);

// Seeded synthetic two-class task: Gaussian blobs around +/-separation
// with fresh anonymized sample ids.
Dataset make_blobs(std::size_t n, std::size_t feature_dim, double separation,
                   std::uint64_t seed);

// Line-delimited dataset fixtures: `id_hex, f1, f2, ..., label`.
void save_dataset(const Dataset& d, std::ostream& out);
Dataset load_dataset(std::istream& in);

// Model dump: one line of hex-encoded arch descriptor, one line of
// base64-encoded little-endian weight bytes.
std::string dump_model(const ModelWeights& m);
ModelWeights parse_model_dump(const std::string& text, std::uint64_t version = 0);

}  // namespace tclearn::model
