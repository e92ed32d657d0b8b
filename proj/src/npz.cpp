#include "neounet/npz.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "neounet/error.hpp"

namespace neounet::npz {

namespace {

uint16_t rd16(const uint8_t* p) { return p[0] | (p[1] << 8); }
uint32_t rd32(const uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (uint32_t(p[3]) << 24);
}

void wr16(std::string& out, uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char(v >> 8));
}
void wr32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

std::vector<uint8_t> inflate_raw(const uint8_t* data, size_t compressed,
                                 size_t uncompressed) {
  std::vector<uint8_t> out(uncompressed);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) {
    throw DataError("npz: inflateInit failed");
  }
  zs.next_in = const_cast<Bytef*>(data);
  zs.avail_in = static_cast<uInt>(compressed);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(uncompressed);
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) {
    throw DataError("npz: deflate stream corrupt (rc " + std::to_string(rc) + ")");
  }
  return out;
}

torch::Tensor parse_npy(const std::vector<uint8_t>& bytes,
                        const std::string& name) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0) {
    throw DataError("npz: entry '" + name + "' is not an npy array");
  }
  const int major = bytes[6];
  size_t header_len, header_off;
  if (major == 1) {
    header_len = rd16(bytes.data() + 8);
    header_off = 10;
  } else {
    header_len = rd32(bytes.data() + 8);
    header_off = 12;
  }
  const std::string header(bytes.begin() + header_off,
                           bytes.begin() + header_off + header_len);

  auto find_value = [&](const std::string& key) -> std::string {
    const auto pos = header.find("'" + key + "'");
    if (pos == std::string::npos) {
      throw DataError("npz: entry '" + name + "' header missing " + key);
    }
    auto colon = header.find(':', pos);
    auto end = header.find_first_of(",}", header.find_first_not_of(" ", colon + 1));
    // tuples contain commas; extend to the closing parenthesis
    auto start = header.find_first_not_of(" ", colon + 1);
    if (header[start] == '(') end = header.find(')', start) + 1;
    return header.substr(start, end - start);
  };

  const std::string descr = find_value("descr");
  const std::string order = find_value("fortran_order");
  const std::string shape_str = find_value("shape");
  if (order.find("True") != std::string::npos) {
    throw DataError("npz: entry '" + name + "' is Fortran-ordered");
  }

  std::vector<int64_t> shape;
  int64_t numel = 1;
  for (size_t i = 0; i < shape_str.size();) {
    if (std::isdigit(shape_str[i])) {
      size_t j = i;
      while (j < shape_str.size() && std::isdigit(shape_str[j])) ++j;
      shape.push_back(std::stoll(shape_str.substr(i, j - i)));
      numel *= shape.back();
      i = j;
    } else {
      ++i;
    }
  }

  torch::Dtype dtype;
  size_t item = 0;
  if (descr.find("<f4") != std::string::npos) {
    dtype = torch::kFloat32;
    item = 4;
  } else if (descr.find("<f8") != std::string::npos) {
    dtype = torch::kFloat64;
    item = 8;
  } else if (descr.find("<i8") != std::string::npos) {
    dtype = torch::kInt64;
    item = 8;
  } else {
    throw DataError("npz: entry '" + name + "' has unsupported dtype " + descr);
  }

  const size_t data_off = header_off + header_len;
  if (bytes.size() - data_off < static_cast<size_t>(numel) * item) {
    throw DataError("npz: entry '" + name + "' truncated");
  }
  auto t = torch::empty(shape.empty() ? std::vector<int64_t>{} : shape,
                        torch::TensorOptions().dtype(dtype));
  std::memcpy(t.data_ptr(), bytes.data() + data_off, numel * item);
  return t;
}

} // namespace

std::map<std::string, torch::Tensor> load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("npz: cannot open " + path);
  std::vector<uint8_t> file((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  if (file.size() < 22) throw DataError("npz: " + path + " too small");

  // End-of-central-directory record, scanning back over a possible comment.
  size_t eocd = std::string::npos;
  for (size_t i = file.size() - 22; i + 4 >= 4; --i) {
    if (rd32(file.data() + i) == 0x06054b50) {
      eocd = i;
      break;
    }
    if (i == 0) break;
  }
  if (eocd == std::string::npos) {
    throw DataError("npz: " + path + " has no zip directory");
  }
  const uint16_t count = rd16(file.data() + eocd + 10);
  size_t cd = rd32(file.data() + eocd + 16);

  std::map<std::string, torch::Tensor> arrays;
  for (uint16_t i = 0; i < count; ++i) {
    if (rd32(file.data() + cd) != 0x02014b50) {
      throw DataError("npz: bad central directory entry in " + path);
    }
    const uint16_t method = rd16(file.data() + cd + 10);
    const uint32_t csize = rd32(file.data() + cd + 20);
    const uint32_t usize = rd32(file.data() + cd + 24);
    const uint16_t name_len = rd16(file.data() + cd + 28);
    const uint16_t extra_len = rd16(file.data() + cd + 30);
    const uint16_t comment_len = rd16(file.data() + cd + 32);
    const uint32_t local_off = rd32(file.data() + cd + 42);
    std::string name(reinterpret_cast<const char*>(file.data() + cd + 46),
                     name_len);
    cd += 46 + name_len + extra_len + comment_len;

    // Local header gives the actual data offset.
    if (rd32(file.data() + local_off) != 0x04034b50) {
      throw DataError("npz: bad local header for '" + name + "'");
    }
    const uint16_t lname = rd16(file.data() + local_off + 26);
    const uint16_t lextra = rd16(file.data() + local_off + 28);
    const size_t data_off = local_off + 30 + lname + lextra;

    std::vector<uint8_t> bytes;
    if (method == 0) {
      bytes.assign(file.begin() + data_off, file.begin() + data_off + usize);
    } else if (method == 8) {
      bytes = inflate_raw(file.data() + data_off, csize, usize);
    } else {
      throw DataError("npz: entry '" + name + "' uses unsupported method " +
                      std::to_string(method));
    }

    if (name.size() > 4 && name.substr(name.size() - 4) == ".npy") {
      name = name.substr(0, name.size() - 4);
    }
    arrays[name] = parse_npy(bytes, name);
  }
  return arrays;
}

namespace {

std::string npy_bytes(const torch::Tensor& tensor) {
  auto t = tensor.contiguous().cpu();
  std::string descr;
  if (t.dtype() == torch::kFloat32) descr = "<f4";
  else if (t.dtype() == torch::kFloat64) descr = "<f8";
  else if (t.dtype() == torch::kInt64) descr = "<i8";
  else throw DataError("npz: unsupported dtype for save");

  std::string shape = "(";
  for (int64_t i = 0; i < t.dim(); ++i) {
    shape += std::to_string(t.size(i)) + (t.dim() == 1 ? "," : "");
    if (i + 1 < t.dim()) shape += ", ";
  }
  shape += ")";

  std::string header = "{'descr': '" + descr +
                       "', 'fortran_order': False, 'shape': " + shape + ", }";
  const size_t unpadded = 10 + header.size() + 1;
  header.append(64 - (unpadded % 64 ? unpadded % 64 : 64), ' ');
  header.push_back('\n');

  std::string out("\x93NUMPY\x01\x00", 8);
  wr16(out, static_cast<uint16_t>(header.size()));
  out += header;
  out.append(reinterpret_cast<const char*>(t.data_ptr()),
             t.numel() * t.element_size());
  return out;
}

} // namespace

void save(const std::string& path,
          const std::map<std::string, torch::Tensor>& arrays) {
  std::string payload;
  std::string central;
  uint16_t count = 0;
  for (const auto& [name, tensor] : arrays) {
    const std::string fname = name + ".npy";
    const std::string data = npy_bytes(tensor);
    const uint32_t crc =
        crc32(0, reinterpret_cast<const Bytef*>(data.data()), data.size());
    const uint32_t offset = static_cast<uint32_t>(payload.size());

    payload += "PK\x03\x04";
    wr16(payload, 20);  // version needed
    wr16(payload, 0);   // flags
    wr16(payload, 0);   // stored
    wr16(payload, 0);   // time
    wr16(payload, 0);   // date
    wr32(payload, crc);
    wr32(payload, static_cast<uint32_t>(data.size()));
    wr32(payload, static_cast<uint32_t>(data.size()));
    wr16(payload, static_cast<uint16_t>(fname.size()));
    wr16(payload, 0);  // extra
    payload += fname;
    payload += data;

    central += "PK\x01\x02";
    wr16(central, 20);
    wr16(central, 20);
    wr16(central, 0);
    wr16(central, 0);
    wr16(central, 0);
    wr16(central, 0);
    wr32(central, crc);
    wr32(central, static_cast<uint32_t>(data.size()));
    wr32(central, static_cast<uint32_t>(data.size()));
    wr16(central, static_cast<uint16_t>(fname.size()));
    wr16(central, 0);
    wr16(central, 0);
    wr16(central, 0);
    wr16(central, 0);
    wr32(central, 0);
    wr32(central, offset);
    central += fname;
    ++count;
  }

  std::string eocd = "PK\x05\x06";
  wr16(eocd, 0);
  wr16(eocd, 0);
  wr16(eocd, count);
  wr16(eocd, count);
  wr32(eocd, static_cast<uint32_t>(central.size()));
  wr32(eocd, static_cast<uint32_t>(payload.size()));
  wr16(eocd, 0);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("npz: cannot write " + path);
  out << payload << central << eocd;
}

} // namespace neounet::npz
