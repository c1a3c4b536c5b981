#include "fra/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <sstream>

#include "fra/csv.hpp"
#include "fra/error.hpp"

namespace fra::ckpt {
namespace {

constexpr const char* kMagic = "FRACKPT";

void put_le(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

double get_le(const char* p) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
    return std::bit_cast<double>(bits);
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

    std::string line() {
        const auto nl = bytes_.find('\n', pos_);
        if (nl == std::string::npos) fail("unexpected end of manifest");
        std::string out = bytes_.substr(pos_, nl - pos_);
        pos_ = nl + 1;
        ++line_;
        return out;
    }

    std::string block(std::size_t n) {
        if (pos_ + n + 1 > bytes_.size()) fail("truncated block");
        std::string out = bytes_.substr(pos_, n);
        pos_ += n;
        if (bytes_[pos_] != '\n') fail("block not newline-terminated");
        ++pos_;
        line_ += static_cast<std::size_t>(std::count(out.begin(), out.end(), '\n')) + 1;
        return out;
    }

    std::vector<std::string> words() {
        std::istringstream is(line());
        std::vector<std::string> out;
        for (std::string w; is >> w;) out.push_back(w);
        return out;
    }

    std::size_t number(const std::string& text) {
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc{} || ptr != text.data() + text.size()) fail("'" + text + "' is not a count");
        return v;
    }

    std::size_t expect_count(const std::string& keyword) {
        const auto w = words();
        if (w.size() != 2 || w[0] != keyword) fail("expected '" + keyword + " <n>'");
        return number(w[1]);
    }

    const char* remaining(std::size_t n) {
        if (pos_ + n > bytes_.size()) fail("payload truncated: need " + std::to_string(n) + " bytes");
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

    [[noreturn]] void fail(const std::string& msg) const {
        throw LoadError(source_ + ": line " + std::to_string(line_ + 1) + ": " + msg);
    }

private:
    const std::string& bytes_;
    const std::string& source_;
    std::size_t pos_ = 0;
    std::size_t line_ = 0;
};

}  // namespace

std::string serialize(const Checkpoint& ckpt) {
    std::string out = std::string(kMagic) + " " + std::to_string(ckpt.version) + "\n";
    out += "config " + std::to_string(ckpt.config_json.size()) + "\n" + ckpt.config_json + "\n";
    out += "metadata " + std::to_string(ckpt.metadata_json.size()) + "\n" + ckpt.metadata_json + "\n";
    out += "step " + std::to_string(ckpt.step) + "\n";
    out += "history " + std::to_string(ckpt.history.size()) + "\n";
    for (const auto& h : ckpt.history) {
        out += csv::format_double(h.bce) + " " + csv::format_double(h.triplet_pose) + " " +
               csv::format_double(h.triplet_identity) + " " + csv::format_double(h.triplet_emotion) + " " +
               csv::format_double(h.total) + "\n";
    }
    out += "tensors " + std::to_string(ckpt.tensors.size()) + "\n";
    for (const auto& [name, t] : ckpt.tensors) {
        if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
            throw ContractError("checkpoint tensor name '" + name + "' must be non-empty without whitespace");
        }
        out += name + " " + std::to_string(t.rank());
        for (auto d : t.shape()) out += " " + std::to_string(d);
        out += "\n";
    }
    out += "payload\n";
    for (const auto& [name, t] : ckpt.tensors) {
        for (double v : t.values()) put_le(out, v);
    }
    return out;
}

Checkpoint deserialize(const std::string& bytes, const std::string& source) {
    Reader r(bytes, source);
    Checkpoint c;
    const auto head = r.words();
    if (head.size() != 2 || head[0] != kMagic) r.fail("not a checkpoint (missing FRACKPT header)");
    const auto version = r.number(head[1]);
    if (version != static_cast<std::size_t>(kFormatVersion)) {
        r.fail("format version " + head[1] + " is not supported (expected " + std::to_string(kFormatVersion) + ")");
    }
    c.version = kFormatVersion;
    c.config_json = r.block(r.expect_count("config"));
    c.metadata_json = r.block(r.expect_count("metadata"));
    c.step = r.expect_count("step");
    const std::size_t n_hist = r.expect_count("history");
    for (std::size_t k = 0; k < n_hist; ++k) {
        const auto w = r.words();
        if (w.size() != 5) r.fail("history rows need 5 values");
        try {
            c.history.push_back({csv::parse_double(w[0], "bce"), csv::parse_double(w[1], "triplet_pose"),
                                 csv::parse_double(w[2], "triplet_identity"), csv::parse_double(w[3], "triplet_emotion"),
                                 csv::parse_double(w[4], "total")});
        } catch (const InputError& e) {
            r.fail(e.what());
        }
    }
    const std::size_t n_tensors = r.expect_count("tensors");
    std::vector<std::pair<std::string, Shape>> layout;
    for (std::size_t k = 0; k < n_tensors; ++k) {
        const auto w = r.words();
        if (w.size() < 2) r.fail("tensor line needs a name and a rank");
        const std::size_t rank = r.number(w[1]);
        if (w.size() != 2 + rank) r.fail("tensor " + w[0] + " declares rank " + w[1] + " but lists " +
                                         std::to_string(w.size() - 2) + " extents");
        Shape shape;
        for (std::size_t d = 0; d < rank; ++d) shape.push_back(r.number(w[2 + d]));
        layout.emplace_back(w[0], std::move(shape));
    }
    if (r.line() != "payload") r.fail("expected 'payload'");
    for (auto& [name, shape] : layout) {
        const std::size_t n = shape_numel(shape);
        const char* p = r.remaining(8 * n);
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) values[i] = get_le(p + 8 * i);
        if (!c.tensors.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
            r.fail("duplicate tensor " + name);
        }
    }
    if (!r.at_end()) r.fail("trailing bytes after payload");
    return c;
}

void save(const Checkpoint& ckpt, const std::filesystem::path& path) { csv::write_text(path, serialize(ckpt)); }

Checkpoint load(const std::filesystem::path& path) {
    std::string bytes;
    try {
        bytes = csv::read_text(path);
    } catch (const IoError& e) {
        throw LoadError(e.what());
    }
    return deserialize(bytes, path.string());
}

std::string content_id(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
        h >>= 4;
    }
    return out;
}

void store_model(Checkpoint& ckpt, const FraModel& model) {
    for (const auto& p : model.parameters()) {
        Tensor copy(p.tensor->shape(), std::vector<double>(p.tensor->values().begin(), p.tensor->values().end()));
        ckpt.tensors.insert_or_assign(p.name, std::move(copy));
    }
}

void restore_model(const Checkpoint& ckpt, FraModel& model) {
    std::string problems;
    std::size_t n_problems = 0;
    for (const auto& p : model.parameters()) {
        const auto it = ckpt.tensors.find(p.name);
        if (it == ckpt.tensors.end()) {
            problems += "\n  missing " + p.name;
            ++n_problems;
        } else if (it->second.shape() != p.tensor->shape()) {
            problems += "\n  " + p.name + " has shape " + shape_str(it->second.shape()) + ", model expects " +
                        shape_str(p.tensor->shape());
            ++n_problems;
        }
    }
    if (n_problems > 0) {
        throw LoadError("checkpoint does not match the model (" + std::to_string(n_problems) + " tensors):" + problems);
    }
    for (const auto& p : model.parameters()) {
        const Tensor& src = ckpt.tensors.at(p.name);
        std::copy(src.values().begin(), src.values().end(), p.tensor->values().begin());
    }
}

}  // namespace fra::ckpt
