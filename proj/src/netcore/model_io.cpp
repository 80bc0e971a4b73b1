#include "hmeval/model_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "hmeval/error.hpp"

namespace hmeval {
namespace {

constexpr std::array<char, 4> kMagic = {'H', 'B', 'M', '1'};

enum Tag : std::uint8_t { kLinear = 1, kConv = 2, kPool = 3, kRelu = 4, kFlatten = 5 };

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::size_t value) {
        const auto v = static_cast<std::uint32_t>(value);
        for (int i = 0; i < 4; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(const std::vector<double>& values) {
        for (double d : values) {
            const auto bits = std::bit_cast<std::uint64_t>(d);
            for (int i = 0; i < 8; ++i) out_.put(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void bytes(char* dst, std::size_t n, const char* what) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            fail(ErrorKind::Truncated, std::string("model file truncated while reading ") + what +
                                           " at byte " + std::to_string(offset_));
        }
        offset_ += n;
    }
    std::uint8_t u8(const char* what) {
        char c;
        bytes(&c, 1, what);
        return static_cast<std::uint8_t>(c);
    }
    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        bytes(reinterpret_cast<char*>(b), 4, what);
        return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
               std::uint32_t{b[3]} << 24;
    }
    std::vector<double> f64(std::size_t count, const char* what) {
        std::vector<double> out(count);
        std::vector<unsigned char> raw(count * 8);
        bytes(reinterpret_cast<char*>(raw.data()), raw.size(), what);
        for (std::size_t k = 0; k < count; ++k) {
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i) bits |= std::uint64_t{raw[k * 8 + i]} << (8 * i);
            out[k] = std::bit_cast<double>(bits);
        }
        return out;
    }

private:
    std::istream& in_;
    std::size_t offset_ = 0;
};

// Parameter counts are bounded before allocation so a corrupt header cannot
// request absurd buffers.
constexpr std::uint64_t kMaxParameters = std::uint64_t{1} << 28;

std::size_t checked_count(std::uint64_t n, std::size_t layer) {
    if (n > kMaxParameters) {
        fail(ErrorKind::Validation,
             "layer " + std::to_string(layer) + ": parameter count " + std::to_string(n) +
                 " exceeds limit");
    }
    return static_cast<std::size_t>(n);
}

}  // namespace

void write_model(const Model& model, std::ostream& out) {
    Writer w(out);
    out.write(kMagic.data(), kMagic.size());
    w.u32(model.input_shape().size());
    for (std::size_t e : model.input_shape()) w.u32(e);
    w.u32(model.input_norm().shift.size());
    w.f64(model.input_norm().shift);
    w.f64(model.input_norm().scale);
    w.u32(model.layer_count());
    for (const Layer& layer : model.layers()) {
        if (const auto* l = std::get_if<Linear>(&layer)) {
            w.u8(kLinear);
            w.u32(l->in);
            w.u32(l->out);
            w.f64(l->weights);
            w.f64(l->bias);
        } else if (const auto* c = std::get_if<Conv2D>(&layer)) {
            w.u8(kConv);
            for (std::size_t v : {c->in_channels, c->out_channels, c->kernel_h, c->kernel_w,
                                  c->stride, c->padding})
                w.u32(v);
            w.f64(c->weights);
            w.f64(c->bias);
        } else if (const auto* p = std::get_if<MaxPool2D>(&layer)) {
            w.u8(kPool);
            w.u32(p->window);
            w.u32(p->stride);
        } else if (std::holds_alternative<ReLU>(layer)) {
            w.u8(kRelu);
        } else {
            w.u8(kFlatten);
        }
    }
    if (!out) fail(ErrorKind::Io, "failed writing model stream");
}

Model read_model(std::istream& in) {
    Reader r(in);
    std::array<char, 4> magic{};
    r.bytes(magic.data(), magic.size(), "magic");
    if (std::memcmp(magic.data(), kMagic.data(), 3) != 0) {
        fail(ErrorKind::Format, "not a model file (bad magic bytes)");
    }
    if (magic[3] != kMagic[3]) {
        fail(ErrorKind::Version, std::string("unsupported model format version '") + magic[3] +
                                     "', expected '1'");
    }
    const std::uint32_t rank = r.u32("input rank");
    if (rank == 0 || rank > 3) {
        fail(ErrorKind::Validation, "input rank " + std::to_string(rank) + " is not 1..3");
    }
    Shape input_shape(rank);
    for (auto& e : input_shape) e = r.u32("input extent");
    InputNorm norm;
    const std::uint32_t norm_channels = r.u32("input normalization");
    if (norm_channels > input_shape[0]) {
        fail(ErrorKind::Validation, "input normalization declares " +
                                        std::to_string(norm_channels) + " channels");
    }
    norm.shift = r.f64(norm_channels, "input normalization");
    norm.scale = r.f64(norm_channels, "input normalization");
    const std::uint32_t count = r.u32("layer count");
    if (count == 0) fail(ErrorKind::Validation, "model declares no layers");
    std::vector<Layer> layers;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint8_t tag = r.u8("layer tag");
        switch (tag) {
            case kLinear: {
                Linear l;
                l.in = r.u32("Linear header");
                l.out = r.u32("Linear header");
                l.weights = r.f64(checked_count(std::uint64_t{l.in} * l.out, i), "Linear weights");
                l.bias = r.f64(l.out, "Linear bias");
                layers.emplace_back(std::move(l));
                break;
            }
            case kConv: {
                Conv2D c;
                c.in_channels = r.u32("Conv2D header");
                c.out_channels = r.u32("Conv2D header");
                c.kernel_h = r.u32("Conv2D header");
                c.kernel_w = r.u32("Conv2D header");
                c.stride = r.u32("Conv2D header");
                c.padding = r.u32("Conv2D header");
                const std::uint64_t n = std::uint64_t{c.out_channels} * c.in_channels *
                                        c.kernel_h * c.kernel_w;
                c.weights = r.f64(checked_count(n, i), "Conv2D weights");
                c.bias = r.f64(checked_count(c.out_channels, i), "Conv2D bias");
                layers.emplace_back(std::move(c));
                break;
            }
            case kPool: {
                MaxPool2D p;
                p.window = r.u32("MaxPool2D header");
                p.stride = r.u32("MaxPool2D header");
                layers.emplace_back(p);
                break;
            }
            case kRelu: layers.emplace_back(ReLU{}); break;
            case kFlatten: layers.emplace_back(Flatten{}); break;
            default:
                fail(ErrorKind::Format, "layer " + std::to_string(i) + ": unknown type tag " +
                                            std::to_string(tag));
        }
    }
    return Model(std::move(input_shape), std::move(layers), std::move(norm));
}

void save_model(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    write_model(model, out);
    out.flush();
    if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open model file " + path.string());
    try {
        return read_model(in);
    } catch (const Error& e) {
        fail(e.kind(), path.string() + ": " + e.what());
    }
}

}  // namespace hmeval
