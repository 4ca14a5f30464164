#include <fstream>
#include <sstream>

#include "evolvtrip/error.hpp"
#include "evolvtrip/hashing.hpp"
#include "evolvtrip/text.hpp"
#include "evolvtrip/tkg.hpp"

using nlohmann::json;

namespace evolvtrip {

namespace {

constexpr std::string_view kFormat = "evolvtrip-kg";
constexpr int kVersion = 1;

[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorCode::CorruptGraphFile, why); }

}  // namespace

std::string save_kg_to_string(const TemporalKG& kg) {
  std::vector<std::string> body;
  for (const auto& [name, node] : kg.nodes()) {
    body.push_back(json{{"type", "node"},
                        {"name", node.name},
                        {"plots_seen", node.plots_seen},
                        {"last_batch_plot", node.last_batch_plot}}
                       .dump());
  }
  for (const auto& e : kg.edges()) {
    json j = e.to_json();
    j["type"] = "edge";
    body.push_back(j.dump());
  }
  for (const auto& l : kg.links()) {
    body.push_back(json{{"type", "link"}, {"old", l.old_id}, {"new", l.new_id}, {"reason", to_string(l.reason)}}.dump());
  }
  for (const auto& r : kg.retirements()) {
    body.push_back(json{{"type", "retire"}, {"id", r.triple_id}, {"plot_index", r.plot_index}}.dump());
  }

  const std::string joined = text::join(body, "\n");
  json header{{"type", "header"},
              {"format", kFormat},
              {"version", kVersion},
              {"book_id", kg.book_id()},
              {"plot_count", kg.plot_count()},
              {"counts",
               {{"nodes", kg.nodes().size()},
                {"edges", kg.edges().size()},
                {"links", kg.links().size()},
                {"retirements", kg.retirements().size()}}},
              {"hash", sha256_hex(joined)}};
  std::string out = header.dump() + "\n";
  if (!body.empty()) out += joined + "\n";
  return out;
}

TemporalKG load_kg_from_string(std::string_view data) {
  std::vector<std::string> lines;
  for (auto& line : text::split(data, '\n')) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) corrupt("empty graph file");

  json header;
  try {
    header = json::parse(lines.front());
  } catch (const json::exception& e) {
    corrupt(std::string("unreadable header: ") + e.what());
  }
  if (!header.is_object() || header.value("type", "") != "header" || header.value("format", "") != kFormat) {
    corrupt("missing graph header");
  }

  std::vector<std::string> body(lines.begin() + 1, lines.end());
  if (sha256_hex(text::join(body, "\n")) != header.value("hash", "")) corrupt("integrity hash mismatch");

  TemporalKG kg;
  try {
    kg = TemporalKG(header.at("book_id").get<std::string>(), header.at("plot_count").get<int>());
    int max_edge = 0;
    for (const auto& line : body) {
      json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "node") {
        CharacterNode node;
        node.name = j.at("name").get<std::string>();
        node.plots_seen = j.at("plots_seen").get<std::set<int>>();
        node.last_batch_plot = j.at("last_batch_plot").get<int>();
        kg.nodes_[node.name] = std::move(node);
      } else if (type == "edge") {
        MentalStateTriple t = MentalStateTriple::from_json(j);
        if (t.id.size() > 1 && t.id[0] == 'e') max_edge = std::max(max_edge, std::stoi(t.id.substr(1)));
        kg.edge_index_[t.id] = kg.edges_.size();
        kg.edges_.push_back(std::move(t));
      } else if (type == "link") {
        kg.links_.push_back({j.at("old").get<std::string>(), j.at("new").get<std::string>(),
                             supersede_reason_from_string(j.at("reason").get<std::string>())});
      } else if (type == "retire") {
        kg.retirements_.push_back({j.at("id").get<std::string>(), j.at("plot_index").get<int>()});
      } else {
        corrupt("unknown record type '" + type + "'");
      }
    }
    kg.next_edge_ = max_edge + 1;
    const json& counts = header.at("counts");
    if (counts.at("nodes").get<std::size_t>() != kg.nodes_.size() ||
        counts.at("edges").get<std::size_t>() != kg.edges_.size() ||
        counts.at("links").get<std::size_t>() != kg.links_.size() ||
        counts.at("retirements").get<std::size_t>() != kg.retirements_.size()) {
      corrupt("record counts disagree with header");
    }
  } catch (const json::exception& e) {
    corrupt(std::string("bad record: ") + e.what());
  } catch (const std::logic_error& e) {
    corrupt(std::string("bad record: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptGraphFile) throw;
    corrupt(e.detail());
  }
  return kg;
}

void save_kg(const TemporalKG& kg, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << save_kg_to_string(kg);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

TemporalKG load_kg(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingKg, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_kg_from_string(ss.str());
}

namespace {

std::string tsv_field(std::string s) {
  for (char& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

std::string export_edge_list(const TemporalKG& kg) {
  std::string out = "source\trelation\ttarget\tplot\tstatus\n";
  for (const auto& e : kg.edges()) {
    out += tsv_field(e.subject) + "\t" + tsv_field(e.predicate_raw) + "\t" + tsv_field(e.target.value_or(e.object)) + "\t" +
           std::to_string(e.plot_index) + "\t" + std::string(to_string(e.status)) + "\n";
  }
  return out;
}

}  // namespace evolvtrip
