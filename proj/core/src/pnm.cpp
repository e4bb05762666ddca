#include "a2gnn/pnm.hpp"

#include <fstream>
#include <stdexcept>

namespace a2gnn {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) continue;
        break;
    }
    if (c == EOF) throw std::runtime_error("pnm: truncated header");
    tok.push_back(static_cast<char>(c));
    while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
    return tok;
}

int parse_dim(const std::string& tok, const char* what) {
    int v = std::stoi(tok);
    if (v <= 0) throw std::runtime_error(std::string("pnm: invalid ") + what);
    return v;
}

void read_header(std::istream& in, const char* magic, int& width, int& height,
                 const std::string& path) {
    std::string m = next_token(in);
    if (m != magic)
        throw std::runtime_error("pnm: " + path + ": expected " + magic + ", got " + m);
    width = parse_dim(next_token(in), "width");
    height = parse_dim(next_token(in), "height");
    int maxval = parse_dim(next_token(in), "maxval");
    if (maxval != 255) throw std::runtime_error("pnm: " + path + ": only maxval 255 supported");
    // The single whitespace byte after maxval was consumed by next_token.
}

} // namespace

LabelMap read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pnm: cannot open " + path);
    int w = 0, h = 0;
    read_header(in, "P5", w, h, path);
    LabelMap m(w, h);
    in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.size()));
    if (in.gcount() != static_cast<std::streamsize>(m.size()))
        throw std::runtime_error("pnm: " + path + ": truncated pixel data");
    return m;
}

void write_pgm(const LabelMap& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pnm: cannot write " + path);
    out << "P5\n" << m.width << " " << m.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.size()));
    if (!out) throw std::runtime_error("pnm: write failed: " + path);
}

ImageRgb read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pnm: cannot open " + path);
    int w = 0, h = 0;
    read_header(in, "P6", w, h, path);
    ImageRgb img(w, h);
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.data.size()))
        throw std::runtime_error("pnm: " + path + ": truncated pixel data");
    return img;
}

void write_ppm(const ImageRgb& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pnm: cannot write " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw std::runtime_error("pnm: write failed: " + path);
}

} // namespace a2gnn
