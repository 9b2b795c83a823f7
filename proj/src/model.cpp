#include "tclearn/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "tclearn/encoding.hpp"
#include "tclearn/hash.hpp"
#include "tclearn/rng.hpp"

namespace tclearn::model {

namespace {

constexpr std::size_t kInternalBatch = 32;
constexpr double kProbEps = 1e-12;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double apply_activation(Activation a, double z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::sigmoid: return sigmoid(z);
    }
    throw ValidationError("unknown activation");
}

double activation_deriv(Activation a, double out) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return out > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return out * (1.0 - out);
    }
    throw ValidationError("unknown activation");
}

struct Layer {
    std::size_t in, out;
    std::size_t w_offset;  // weights at w_offset, biases right after the in*out block
    std::size_t b_offset;
};

std::vector<Layer> layout(const ArchDescriptor& arch) {
    std::vector<Layer> layers;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l) {
        Layer ly;
        ly.in = arch.layer_sizes[l];
        ly.out = arch.layer_sizes[l + 1];
        ly.w_offset = off;
        ly.b_offset = off + ly.in * ly.out;
        off = ly.b_offset + ly.out;
        layers.push_back(ly);
    }
    return layers;
}

// Forward pass for one sample; returns all layer outputs (post-activation).
// The output layer applies sigmoid/softmax under cross-entropy and stays
// linear under mse.
std::vector<std::vector<double>> forward(const ArchDescriptor& arch,
                                         const std::vector<double>& w, const double* x) {
    const auto layers = layout(arch);
    std::vector<std::vector<double>> acts;
    acts.reserve(layers.size() + 1);
    acts.emplace_back(x, x + arch.feature_dim());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& ly = layers[l];
        std::vector<double> z(ly.out, 0.0);
        const std::vector<double>& prev = acts.back();
        for (std::size_t i = 0; i < ly.in; ++i) {
            double v = prev[i];
            if (v == 0.0) continue;
            const double* row = w.data() + ly.w_offset + i * ly.out;
            for (std::size_t j = 0; j < ly.out; ++j) z[j] += v * row[j];
        }
        for (std::size_t j = 0; j < ly.out; ++j) z[j] += w[ly.b_offset + j];

        bool is_output = (l + 1 == layers.size());
        std::vector<double> a(ly.out);
        if (!is_output) {
            for (std::size_t j = 0; j < ly.out; ++j) a[j] = apply_activation(arch.activation, z[j]);
        } else if (arch.loss == Loss::cross_entropy) {
            if (ly.out == 1) {
                a[0] = sigmoid(z[0]);
            } else {
                double zmax = *std::max_element(z.begin(), z.end());
                double sum = 0.0;
                for (std::size_t j = 0; j < ly.out; ++j) {
                    a[j] = std::exp(z[j] - zmax);
                    sum += a[j];
                }
                for (std::size_t j = 0; j < ly.out; ++j) a[j] /= sum;
            }
        } else {
            a = z;
        }
        acts.push_back(std::move(a));
    }
    return acts;
}

double sample_loss(const ArchDescriptor& arch, const std::vector<double>& out, double label) {
    if (arch.loss == Loss::cross_entropy) {
        if (out.size() == 1) {
            double p = std::clamp(out[0], kProbEps, 1.0 - kProbEps);
            return label >= 0.5 ? -std::log(p) : -std::log(1.0 - p);
        }
        auto k = static_cast<std::size_t>(label);
        if (k >= out.size()) throw ValidationError("label out of range for arch");
        return -std::log(std::clamp(out[k], kProbEps, 1.0));
    }
    if (out.size() == 1) {
        double d = out[0] - label;
        return d * d;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j) {
        double target = (static_cast<std::size_t>(label) == j) ? 1.0 : 0.0;
        double d = out[j] - target;
        total += d * d;
    }
    return total;
}

// Accumulates d(loss)/d(w) for one sample into grad (not yet averaged).
void backward(const ArchDescriptor& arch, const std::vector<double>& w,
              const std::vector<std::vector<double>>& acts, double label,
              std::vector<double>& grad) {
    const auto layers = layout(arch);
    const std::vector<double>& out = acts.back();

    // Output-layer error dL/dz.
    std::vector<double> delta(out.size());
    if (arch.loss == Loss::cross_entropy) {
        if (out.size() == 1) {
            delta[0] = out[0] - (label >= 0.5 ? 1.0 : 0.0);
        } else {
            for (std::size_t j = 0; j < out.size(); ++j)
                delta[j] = out[j] - ((static_cast<std::size_t>(label) == j) ? 1.0 : 0.0);
        }
    } else {
        if (out.size() == 1) {
            delta[0] = 2.0 * (out[0] - label);
        } else {
            for (std::size_t j = 0; j < out.size(); ++j)
                delta[j] = 2.0 * (out[j] - ((static_cast<std::size_t>(label) == j) ? 1.0 : 0.0));
        }
    }

    for (std::size_t li = layers.size(); li-- > 0;) {
        const Layer& ly = layers[li];
        const std::vector<double>& prev = acts[li];
        for (std::size_t i = 0; i < ly.in; ++i) {
            double v = prev[i];
            if (v == 0.0) continue;
            double* grow = grad.data() + ly.w_offset + i * ly.out;
            for (std::size_t j = 0; j < ly.out; ++j) grow[j] += v * delta[j];
        }
        for (std::size_t j = 0; j < ly.out; ++j) grad[ly.b_offset + j] += delta[j];

        if (li == 0) break;
        const Layer& below = layers[li - 1];
        std::vector<double> next_delta(below.out, 0.0);
        for (std::size_t i = 0; i < ly.in; ++i) {
            const double* row = w.data() + ly.w_offset + i * ly.out;
            double s = 0.0;
            for (std::size_t j = 0; j < ly.out; ++j) s += row[j] * delta[j];
            next_delta[i] = s * activation_deriv(arch.activation, prev[i]);
        }
        delta = std::move(next_delta);
    }
}

std::size_t predict_class(const ArchDescriptor& arch, const std::vector<double>& w,
                          const double* x) {
    auto acts = forward(arch, w, x);
    const std::vector<double>& out = acts.back();
    if (out.size() == 1) return out[0] >= 0.5 ? 1 : 0;
    return static_cast<std::size_t>(
        std::max_element(out.begin(), out.end()) - out.begin());
}

void check_dims(const ModelWeights& m, const Dataset& d) {
    if (d.feature_dim != m.arch.feature_dim())
        throw ValidationError("dataset feature dimension does not match architecture");
}

std::vector<double> batch_gradient(const ModelWeights& m, const std::vector<double>& w,
                                   const Dataset& d, const std::vector<std::size_t>& rows) {
    std::vector<double> grad(w.size(), 0.0);
    for (std::size_t r : rows) {
        auto acts = forward(m.arch, w, d.row(r));
        backward(m.arch, w, acts, d.labels[r], grad);
    }
    double inv = 1.0 / static_cast<double>(rows.size());
    for (double& g : grad) g *= inv;
    return grad;
}

}  // namespace

void ArchDescriptor::validate() const {
    if (layer_sizes.empty()) throw ValidationError("architecture needs at least one layer size");
    for (std::uint32_t s : layer_sizes)
        if (s == 0) throw ValidationError("zero-size layer in architecture");
}

std::size_t ArchDescriptor::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
        n += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n;
}

Bytes ArchDescriptor::canonical_encoding() const {
    CanonicalWriter w;
    w.u32(static_cast<std::uint32_t>(layer_sizes.size()));
    for (std::uint32_t s : layer_sizes) w.u32(s);
    w.u8(static_cast<std::uint8_t>(activation));
    w.u8(static_cast<std::uint8_t>(loss));
    return w.take();
}

Hash32 ArchDescriptor::descriptor_hash() const {
    return crypto::sha256(as_view(canonical_encoding()));
}

ArchDescriptor parse_arch(ByteView canonical) {
    CanonicalReader r(canonical);
    ArchDescriptor a;
    std::uint32_t n = r.u32();
    a.layer_sizes.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) a.layer_sizes.push_back(r.u32());
    a.activation = static_cast<Activation>(r.u8());
    a.loss = static_cast<Loss>(r.u8());
    a.validate();
    return a;
}

void ModelWeights::validate() const {
    arch.validate();
    if (weights.size() != arch.param_count())
        throw ValidationError("weight vector length does not match architecture");
    for (double v : weights)
        if (!std::isfinite(v)) throw ValidationError("non-finite weight");
}

Bytes ModelWeights::canonical_encoding() const {
    CanonicalWriter w;
    w.bytes(as_view(arch.canonical_encoding()));
    w.u64(weights.size());
    for (double v : weights) w.f64(v);
    return w.take();
}

Hash32 ModelWeights::hash() const { return crypto::sha256(as_view(canonical_encoding())); }

ModelWeights parse_model(ByteView canonical, std::uint64_t version) {
    CanonicalReader r(canonical);
    ModelWeights m;
    m.arch = parse_arch(as_view(r.bytes()));
    std::uint64_t n = r.u64();
    m.weights.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) m.weights.push_back(r.f64());
    m.version = version;
    m.validate();
    return m;
}

void Dataset::validate() const {
    if (features.size() != labels.size() * feature_dim || labels.size() != sample_ids.size())
        throw ValidationError("dataset row counts disagree");
    std::set<Id16> seen(sample_ids.begin(), sample_ids.end());
    if (seen.size() != sample_ids.size())
        throw ValidationError("duplicate sample ids within dataset");
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.feature_dim = feature_dim;
    out.features.reserve(indices.size() * feature_dim);
    out.labels.reserve(indices.size());
    out.sample_ids.reserve(indices.size());
    for (std::size_t i : indices) {
        const double* r = row(i);
        out.features.insert(out.features.end(), r, r + feature_dim);
        out.labels.push_back(labels[i]);
        out.sample_ids.push_back(sample_ids[i]);
    }
    return out;
}

ModelWeights init_genesis_model(const ArchDescriptor& arch, std::uint64_t seed) {
    arch.validate();
    if (arch.layer_sizes.size() < 2)
        throw ValidationError("architecture needs an input and an output layer");
    ModelWeights m;
    m.arch = arch;
    m.version = 0;
    m.weights.reserve(arch.param_count());
    Rng rng(derive_seed(seed, "genesis-weights"));
    for (std::size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l) {
        double scale = 1.0 / std::sqrt(static_cast<double>(arch.layer_sizes[l]));
        std::size_t count = static_cast<std::size_t>(arch.layer_sizes[l]) * arch.layer_sizes[l + 1] +
                            arch.layer_sizes[l + 1];
        for (std::size_t i = 0; i < count; ++i) m.weights.push_back(rng.normal() * scale);
    }
    return m;
}

GradientUpdate train_local(const ModelWeights& base, const Dataset& train,
                           std::uint32_t epochs, double learning_rate, std::uint64_t seed,
                           std::uint64_t min_batch_size, const Id16& contributor) {
    base.validate();
    check_dims(base, train);
    if (train.size() < min_batch_size)
        throw ValidationError("training batch below the coalition minimum batch size");

    std::vector<double> w = base.weights;
    Rng rng(derive_seed(seed, "train-local"));
    std::vector<std::size_t> order(train.size());
    for (std::uint32_t e = 0; e < epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += kInternalBatch) {
            std::size_t end = std::min(start + kInternalBatch, order.size());
            std::vector<std::size_t> rows(order.begin() + start, order.begin() + end);
            std::vector<double> grad = batch_gradient(base, w, train, rows);
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * grad[i];
        }
    }

    GradientUpdate g;
    g.base_version = base.version;
    g.batch_size = train.size();
    g.contributor = contributor;
    g.deltas.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) g.deltas[i] = w[i] - base.weights[i];
    return g;
}

ModelWeights apply_gradients(const ModelWeights& base, const GradientUpdate& update) {
    if (update.base_version != base.version)
        throw ValidationError("stale gradient: base version does not match model version");
    if (update.deltas.size() != base.weights.size())
        throw ValidationError("gradient length does not match weight vector");
    ModelWeights next = base;
    for (std::size_t i = 0; i < next.weights.size(); ++i) next.weights[i] += update.deltas[i];
    next.validate();
    return next;
}

EvalReport evaluate(const ModelWeights& m, const Dataset& test, DatasetKind kind) {
    m.validate();
    check_dims(m, test);
    if (test.size() == 0) throw ValidationError("cannot evaluate on an empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        std::size_t predicted = predict_class(m.arch, m.weights, test.row(i));
        std::size_t actual = m.arch.output_dim() == 1
                                 ? (test.labels[i] >= 0.5 ? 1 : 0)
                                 : static_cast<std::size_t>(test.labels[i]);
        if (predicted == actual) ++correct;
    }
    EvalReport r;
    r.metric = static_cast<double>(correct) / static_cast<double>(test.size());
    r.sample_count = test.size();
    r.dataset_kind = kind;
    return r;
}

std::pair<Dataset, Dataset> split_local_test(const Dataset& data, double fraction,
                                             std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 0.5))
        throw ValidationError("split fraction must lie in (0, 0.5)");
    std::size_t n = data.size();
    auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (m < 1) m = 1;
    if (n < 2 || n - m < 1)
        throw ValidationError("dataset too small to split into non-empty parts");

    Rng rng(derive_seed(seed, "local-test-split"));
    std::vector<std::size_t> perm = rng.permutation(n);
    std::vector<std::size_t> local(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(m));
    std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(m), perm.end());
    return {data.subset(train), data.subset(local)};
}

double loss_value(const ModelWeights& m, const Dataset& data) {
    check_dims(m, data);
    if (data.size() == 0) throw ValidationError("cannot compute loss of an empty dataset");
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto acts = forward(m.arch, m.weights, data.row(i));
        total += sample_loss(m.arch, acts.back(), data.labels[i]);
    }
    return total / static_cast<double>(data.size());
}

std::vector<double> loss_gradient(const ModelWeights& m, const Dataset& data) {
    check_dims(m, data);
    if (data.size() == 0) throw ValidationError("cannot compute gradient of an empty dataset");
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return batch_gradient(m, m.weights, data, rows);
}

Dataset make_blobs(std::size_t n, std::size_t feature_dim, double separation,
                   std::uint64_t seed) {
    Dataset d;
    d.feature_dim = feature_dim;
    d.features.reserve(n * feature_dim);
    d.labels.reserve(n);
    d.sample_ids.reserve(n);
    Rng rng(derive_seed(seed, "blob-features"));
    for (std::size_t i = 0; i < n; ++i) {
        double label = static_cast<double>(i % 2);
        double center = label >= 0.5 ? separation : -separation;
        for (std::size_t f = 0; f < feature_dim; ++f) d.features.push_back(center + rng.normal());
        d.labels.push_back(label);

        CanonicalWriter w;
        w.u64(seed);
        w.str("sample-id");
        w.u64(i);
        Hash32 h = crypto::sha256(as_view(w.data()));
        Id16 id{};
        std::copy_n(h.begin(), id.size(), id.begin());
        d.sample_ids.push_back(id);
    }
    return d;
}

void save_dataset(const Dataset& d, std::ostream& out) {
    for (std::size_t i = 0; i < d.size(); ++i) {
        out << to_hex(as_view(d.sample_ids[i]));
        for (std::size_t f = 0; f < d.feature_dim; ++f)
            out << ", " << format_double(d.row(i)[f]);
        out << ", " << format_double(d.labels[i]) << "\n";
    }
}

Dataset load_dataset(std::istream& in) {
    Dataset d;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (start <= line.size()) {
            std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) comma = line.size();
            std::string f = line.substr(start, comma - start);
            std::size_t b = f.find_first_not_of(" \t");
            std::size_t e = f.find_last_not_of(" \t\r");
            fields.push_back(b == std::string::npos ? std::string() : f.substr(b, e - b + 1));
            start = comma + 1;
        }
        if (fields.size() < 3) throw ValidationError("dataset record needs id, features, label");
        std::size_t dim = fields.size() - 2;
        if (d.size() == 0) {
            d.feature_dim = dim;
        } else if (dim != d.feature_dim) {
            throw ValidationError("inconsistent feature count in dataset file");
        }
        d.sample_ids.push_back(id16_from_hex(fields[0]));
        for (std::size_t f = 1; f <= dim; ++f) d.features.push_back(parse_double(fields[f]));
        d.labels.push_back(parse_double(fields.back()));
    }
    d.validate();
    return d;
}

std::string dump_model(const ModelWeights& m) {
    m.validate();
    CanonicalWriter w;
    for (double v : m.weights) w.f64(v);
    return to_hex(as_view(m.arch.canonical_encoding())) + "\n" + to_base64(as_view(w.data())) +
           "\n";
}

ModelWeights parse_model_dump(const std::string& text, std::uint64_t version) {
    std::istringstream in(text);
    std::string arch_line, weights_line;
    if (!std::getline(in, arch_line) || !std::getline(in, weights_line))
        throw ValidationError("model dump needs an arch line and a weights line");
    ModelWeights m;
    Bytes arch_bytes = from_hex(arch_line);
    m.arch = parse_arch(as_view(arch_bytes));
    Bytes wb = from_base64(weights_line);
    if (wb.size() % 8 != 0) throw ValidationError("weight bytes not a multiple of 8");
    CanonicalReader r(as_view(wb));
    m.weights.reserve(wb.size() / 8);
    while (!r.at_end()) m.weights.push_back(r.f64());
    m.version = version;
    m.validate();
    return m;
}

}  // namespace tclearn::model
