#include "rfdense/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include "rfdense/error.hpp"

namespace rfdense {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'F', 'D', 'A', 'R', 'C', 'H', '\0'};
constexpr std::size_t kHashBytes = 32;

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto view = bytes_.substr(pos_, n);
        pos_ += n;
        return view;
    }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("archive is truncated");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::string sha256_raw(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1 || len != kHashBytes) {
        throw Error("hash_error", "SHA-256 computation failed");
    }
    return std::string(reinterpret_cast<const char*>(digest), len);
}

std::string to_hex(std::string_view raw) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string hex;
    for (unsigned char c : raw) {
        hex.push_back(digits[c >> 4]);
        hex.push_back(digits[c & 15]);
    }
    return hex;
}

}  // namespace

const Tensor& Archive::tensor(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t.tensor;
    throw FormatError("archive has no tensor '" + name + "'");
}

std::string sha256_hex(std::string_view bytes) { return to_hex(sha256_raw(bytes)); }

std::string serialize_archive(const Archive& archive) {
    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kArchiveVersion);
    const std::string meta = archive.metadata.dump();
    put<std::uint64_t>(out, meta.size());
    out += meta;
    put<std::uint64_t>(out, archive.tensors.size());
    for (const auto& [name, t] : archive.tensors) {
        t.validate();
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
        const std::size_t offset = out.size();
        out.resize(offset + t.data.size() * sizeof(double));
        std::memcpy(out.data() + offset, t.data.data(), t.data.size() * sizeof(double));
    }
    out += sha256_raw(out);
    return out;
}

Archive parse_archive(std::string_view bytes) {
    if (bytes.size() < sizeof kMagic + kHashBytes || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw FormatError("not an archive (bad magic)");
    }
    const std::string_view body = bytes.substr(0, bytes.size() - kHashBytes);
    if (sha256_raw(body) != bytes.substr(bytes.size() - kHashBytes)) {
        throw FormatError("archive content hash mismatch");
    }
    Reader r(body);
    r.take(sizeof kMagic);
    const auto version = r.get<std::uint32_t>();
    if (version != kArchiveVersion) throw FormatError("unsupported archive version " + std::to_string(version));
    Archive archive;
    const auto meta_len = r.get<std::uint64_t>();
    try {
        archive.metadata = nlohmann::json::parse(r.take(meta_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("archive metadata: ") + e.what());
    }
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedTensor nt;
        nt.name = std::string(r.take(r.get<std::uint32_t>()));
        const auto rank = r.get<std::uint32_t>();
        for (std::uint32_t d = 0; d < rank; ++d) nt.tensor.shape.push_back(static_cast<int>(r.get<std::uint64_t>()));
        const std::size_t n = shape_size(nt.tensor.shape);
        const auto raw = r.take(n * sizeof(double));
        nt.tensor.data.resize(n);
        std::memcpy(nt.tensor.data.data(), raw.data(), raw.size());
        archive.tensors.push_back(std::move(nt));
    }
    if (r.position() != body.size()) throw FormatError("trailing bytes in archive");
    return archive;
}

std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string save_archive(const std::filesystem::path& path, const Archive& archive) {
    const std::string bytes = serialize_archive(archive);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + path.string());
    return to_hex(std::string_view(bytes).substr(bytes.size() - kHashBytes));
}

Archive load_archive(const std::filesystem::path& path) { return parse_archive(read_file_bytes(path)); }

std::string archive_content_hash(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    parse_archive(bytes);
    return to_hex(std::string_view(bytes).substr(bytes.size() - kHashBytes));
}

}  // namespace rfdense
