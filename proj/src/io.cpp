#include "promptcount/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

namespace pc {

void save_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) throw Error("save_ppm: image must be (3,H,W)");
    const int h = image.dim(1), w = image.dim(2);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open image for writing: " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at3(c, y, x), 0.0, 1.0);
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<uint8_t>(std::lround(v * 255.0));
            }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw Error("image write failed: " + path);
}

Tensor load_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open image: " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
        throw Error("bad PPM header in " + path);
    f.get();  // single whitespace after header
    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw Error("truncated PPM payload in " + path);
    Tensor image({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                image.at3(c, y, x) =
                    raw[(static_cast<size_t>(y) * w + x) * 3 + static_cast<size_t>(c)] / 255.0;
    return image;
}

void save_pgm(const std::string& path, const std::vector<uint8_t>& gray, int h, int w) {
    if (static_cast<int64_t>(gray.size()) != static_cast<int64_t>(h) * w)
        throw Error("save_pgm: size mismatch");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open image for writing: " + path);
    f << "P5\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
    if (!f) throw Error("image write failed: " + path);
}

void save_pdm(const std::string& path, const Tensor& density) {
    if (density.rank() != 2) throw Error("save_pdm: density must be 2-D");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open density file for writing: " + path);
    f.write("PDM1", 4);
    const uint32_t h = static_cast<uint32_t>(density.dim(0));
    const uint32_t w = static_cast<uint32_t>(density.dim(1));
    f.write(reinterpret_cast<const char*>(&h), 4);
    f.write(reinterpret_cast<const char*>(&w), 4);
    std::vector<float> buf(density.v.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(density.v[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw Error("density write failed: " + path);
}

Tensor load_pdm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open density file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "PDM1", 4) != 0) throw Error("bad PDM magic in " + path);
    uint32_t h = 0, w = 0;
    f.read(reinterpret_cast<char*>(&h), 4);
    f.read(reinterpret_cast<char*>(&w), 4);
    if (!f || h == 0 || w == 0 || h > 1u << 20 || w > 1u << 20)
        throw Error("bad PDM dimensions in " + path);
    std::vector<float> buf(static_cast<size_t>(h) * w);
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw Error("truncated PDM payload in " + path);
    Tensor density({static_cast<int>(h), static_cast<int>(w)});
    for (size_t i = 0; i < buf.size(); ++i) density.v[i] = static_cast<double>(buf[i]);
    return density;
}

Tensor snap_f32(const Tensor& t) {
    Tensor out = t;
    for (auto& x : out.v) x = static_cast<double>(static_cast<float>(x));
    return out;
}

std::string file_checksum(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open file for checksum: " + path);
    uint64_t hash = 1469598103934665603ull;
    char buf[8192];
    while (f) {
        f.read(buf, sizeof(buf));
        const std::streamsize n = f.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            hash ^= static_cast<uint8_t>(buf[i]);
            hash *= 1099511628211ull;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(hash));
    return std::string(out);
}

}  // namespace pc
