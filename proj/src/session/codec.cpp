#include "hetlab/session/codec.hpp"

#include "hetlab/error.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hetlab::session {

static_assert(std::endian::native == std::endian::little, "parameter blobs assume a little-endian host");

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw bad_input("base64: length is not a multiple of 4");
    std::string out(3 * text.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (n < 0) throw bad_input("base64: invalid characters");
    // EVP_DecodeBlock keeps the padding bytes
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned char c : digest) {
        out.push_back(hex[c >> 4]);
        out.push_back(hex[c & 15]);
    }
    return out;
}

std::string pack_f32(const std::vector<double>& values) {
    std::string out(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto f = static_cast<float>(values[i]);
        if (!std::isfinite(values[i]) || static_cast<double>(f) != values[i])
            throw numeric_error("parameter " + std::to_string(i) + " is not a finite float32 value");
        std::memcpy(out.data() + 4 * i, &f, 4);
    }
    return out;
}

std::vector<double> unpack_f32(std::string_view bytes) {
    if (bytes.size() % 4 != 0) throw bad_input("parameter blob length is not a multiple of 4");
    std::vector<double> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        float f;
        std::memcpy(&f, bytes.data() + 4 * i, 4);
        if (!std::isfinite(f)) throw numeric_error("parameter " + std::to_string(i) + " is not finite");
        out[i] = f;
    }
    return out;
}

// ------------------------------------------------------------------ Reader

namespace {

std::string escape_token(const std::string& key) {
    std::string out;
    for (char c : key) {
        if (c == '~') out += "~0";
        else if (c == '/') out += "~1";
        else out += c;
    }
    return out;
}

}  // namespace

void Reader::fail(const std::string& problem) const {
    throw bad_input((pointer_.empty() ? std::string("/") : pointer_) + ": " + problem);
}

bool Reader::has(const std::string& key) const { return node_.is_object() && node_.contains(key); }

const json& Reader::object() const {
    if (!node_.is_object()) fail("expected an object");
    return node_;
}

const json& Reader::array() const {
    if (!node_.is_array()) fail("expected an array");
    return node_;
}

Reader Reader::at(const std::string& key) const {
    const auto& o = object();
    const auto it = o.find(key);
    const std::string child = pointer_ + "/" + escape_token(key);
    if (it == o.end()) throw bad_input(child + ": missing required field");
    return Reader(*it, child);
}

Reader Reader::at(std::size_t index) const {
    const auto& a = array();
    if (index >= a.size()) fail("index " + std::to_string(index) + " out of range");
    return Reader(a[index], pointer_ + "/" + std::to_string(index));
}

std::size_t Reader::size() const { return array().size(); }

std::string Reader::string() const {
    if (!node_.is_string()) fail("expected a string");
    return node_.get<std::string>();
}

double Reader::number() const {
    if (!node_.is_number()) fail("expected a number");
    const double v = node_.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
}

std::int64_t Reader::integer() const {
    if (node_.is_number_integer()) return node_.get<std::int64_t>();
    if (node_.is_number_float()) {
        const double v = node_.get<double>();
        if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.0e15) return static_cast<std::int64_t>(v);
    }
    fail("expected an integer");
}

std::uint64_t Reader::unsigned_integer() const {
    if (node_.is_number_unsigned()) return node_.get<std::uint64_t>();
    const auto v = integer();
    if (v < 0) fail("expected a non-negative integer");
    return static_cast<std::uint64_t>(v);
}

bool Reader::boolean() const {
    if (!node_.is_boolean()) fail("expected a boolean");
    return node_.get<bool>();
}

// ------------------------------------------------------------------ model spec

namespace {

int small_int(const Reader& r) {
    const auto v = r.integer();
    if (v < 0 || v > 1'000'000) r.fail("value out of range");
    return static_cast<int>(v);
}

}  // namespace

json spec_to_json(const fl::ModelSpec& spec) {
    json j;
    j["kind"] = spec.kind == fl::ModelKind::Mlp ? "mlp" : "cnn-min";
    j["input"] = spec.input.image ? json::array({spec.input.height, spec.input.width, spec.input.channels})
                                  : json::array({spec.input.channels});
    j["classes"] = spec.classes;
    j["seed"] = spec.seed;
    if (spec.kind == fl::ModelKind::Mlp) {
        json layers = json::array();
        for (const auto& d : spec.dense)
            layers.push_back({{"width", d.width}, {"activation", d.activation == fl::Activation::Relu ? "relu" : "softmax"}});
        j["layers"] = layers;
    } else {
        json conv = json::array();
        for (const auto& c : spec.conv) conv.push_back({{"out_channels", c.out_channels}, {"kernel_size", c.kernel_size}});
        j["conv"] = conv;
        j["pooling"] = spec.pooling == fl::Pooling::Flatten ? "flatten" : "global-average";
    }
    return j;
}

fl::ModelSpec spec_from_json(const Reader& r) {
    fl::ModelSpec s;
    const auto kind = r.str("kind");
    if (kind == "mlp") s.kind = fl::ModelKind::Mlp;
    else if (kind == "cnn-min") s.kind = fl::ModelKind::CnnMin;
    else r.at("kind").fail("expected \"mlp\" or \"cnn-min\"");

    const auto input = r.at("input");
    if (input.size() == 1) {
        s.input = fl::InputShape::flat(small_int(input.at(std::size_t{0})));
    } else if (input.size() == 3) {
        s.input = fl::InputShape::hwc(small_int(input.at(std::size_t{0})), small_int(input.at(std::size_t{1})),
                                      small_int(input.at(std::size_t{2})));
    } else {
        input.fail("expected [D] or [H, W, C]");
    }
    s.classes = small_int(r.at("classes"));
    if (r.has("seed")) s.seed = r.at("seed").unsigned_integer();

    if (s.kind == fl::ModelKind::Mlp) {
        const auto layers = r.at("layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto l = layers.at(i);
            fl::DenseLayerSpec d;
            d.width = small_int(l.at("width"));
            const auto act = l.has("activation") ? l.str("activation") : std::string("relu");
            if (act == "relu") d.activation = fl::Activation::Relu;
            else if (act == "softmax") d.activation = fl::Activation::Softmax;
            else l.at("activation").fail("expected \"relu\" or \"softmax\"");
            s.dense.push_back(d);
        }
    } else {
        const auto conv = r.at("conv");
        for (std::size_t i = 0; i < conv.size(); ++i) {
            const auto c = conv.at(i);
            s.conv.push_back({small_int(c.at("out_channels")), small_int(c.at("kernel_size"))});
        }
        if (r.has("pooling")) {
            const auto p = r.str("pooling");
            if (p == "flatten") s.pooling = fl::Pooling::Flatten;
            else if (p == "global-average") s.pooling = fl::Pooling::GlobalAverage;
            else r.at("pooling").fail("expected \"flatten\" or \"global-average\"");
        }
    }
    try {
        s.validate();
    } catch (const Error& e) {
        r.fail(e.what());
    }
    return s;
}

// ------------------------------------------------------------------ parameters

json params_to_json(const fl::ParamVector& params) {
    json layout = json::array();
    for (const auto& t : params.layout.tensors)
        layout.push_back({{"name", t.name}, {"offset", t.offset}, {"length", t.length}, {"shape", t.shape}});
    return {{"layout", layout}, {"encoding", "base64-f32le"}, {"values", base64_encode(pack_f32(params.values))}};
}

fl::ParamVector params_from_json(const Reader& r) {
    fl::ParamVector p;
    if (r.has("encoding") && r.str("encoding") != "base64-f32le") r.at("encoding").fail("unsupported encoding");
    const auto layout = r.at("layout");
    std::size_t next = 0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto t = layout.at(i);
        fl::TensorSlot slot;
        slot.name = t.str("name");
        slot.offset = t.at("offset").unsigned_integer();
        slot.length = t.at("length").unsigned_integer();
        const auto shape = t.at("shape");
        for (std::size_t k = 0; k < shape.size(); ++k) slot.shape.push_back(small_int(shape.at(k)));
        if (slot.offset != next) t.at("offset").fail("tensors must partition the vector in order");
        next += slot.length;
        p.layout.tensors.push_back(std::move(slot));
    }
    const auto values = r.at("values");
    try {
        p.values = unpack_f32(base64_decode(values.string()));
    } catch (const Error& e) {
        values.fail(e.what());
    }
    if (p.values.size() != next) values.fail("holds " + std::to_string(p.values.size()) + " values, layout needs " +
                                             std::to_string(next));
    return p;
}

json metrics_to_json(const fl::RoundMetrics& m) {
    return {{"train_loss", m.train_loss}, {"test_acc", m.test_accuracy}, {"total_acc", m.total_accuracy}};
}

fl::RoundMetrics metrics_from_json(const Reader& r) {
    return {r.num("train_loss"), r.num("test_acc"), r.num("total_acc")};
}

json snapshot_to_json(const fl::RoundSnapshot& s) {
    return {{"round", s.round},
            {"federated", params_to_json(s.federated)},
            {"local_update", params_to_json(s.local_update)},
            {"metrics", metrics_to_json(s.metrics)}};
}

fl::RoundSnapshot snapshot_from_json(const Reader& r) {
    fl::RoundSnapshot s;
    s.round = static_cast<int>(r.int_("round"));
    s.federated = params_from_json(r.at("federated"));
    s.local_update = params_from_json(r.at("local_update"));
    if (!(s.federated.layout == s.local_update.layout)) r.at("local_update").fail("layout differs from federated");
    s.metrics = metrics_from_json(r.at("metrics"));
    return s;
}

// ------------------------------------------------------------------ files

json parse_document(std::string_view text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw bad_input(what + ": invalid JSON at byte " + std::to_string(e.byte));
    }
}

void atomic_write(const std::string& path, std::string_view text) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Internal, "cannot write " + tmp.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.flush();
        if (!out) throw Error(ErrorCode::Internal, "cannot write " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw not_found("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace hetlab::session
