#include "cotmr/prompting.hpp"

#include "cotmr/error.hpp"
#include "prompt_data.hpp"

namespace cotmr {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

struct Section {
  std::string name;  // "system", "subtask", "example", ...
  std::string arg;   // subtask header
  std::string body;
};

std::vector<Section> parse_sections(std::string_view text, std::string_view what) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines.front() != kPromptFormatVersion) {
    throw Error(ErrorKind::MalformedRecord,
                std::string(what) + ": first line must be \"" + std::string(kPromptFormatVersion) + "\"");
  }
  std::vector<Section> sections;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = lines[i];
    if (!line.empty() && line.front() == '@') {
      Section s;
      const auto rest = line.substr(1);
      const auto space = rest.find(' ');
      s.name = std::string(rest.substr(0, space));
      if (space != std::string_view::npos) s.arg = std::string(rest.substr(space + 1));
      sections.push_back(std::move(s));
      continue;
    }
    if (sections.empty()) {
      throw Error(ErrorKind::MalformedRecord,
                  std::string(what) + ":" + std::to_string(i + 1) + ": text before the first @section");
    }
    auto& body = sections.back().body;
    if (!body.empty()) body += '\n';
    body += line;
  }
  return sections;
}

std::string join_blocks(const std::vector<std::string>& blocks) {
  std::string out;
  for (const auto& b : blocks) {
    if (!out.empty()) out += "\n\n";
    out += b;
  }
  return out;
}

std::string modification_line(const std::string& modification_text) {
  return "Modification text: \"" + modification_text + "\"";
}

ChatRequest assemble(const PromptTemplate& tpl, PromptMode mode, const std::string& task_text,
                     const std::string& contract, const std::string& reference_image,
                     const std::string& modification_text) {
  std::vector<std::string> system_blocks{tpl.system_text};
  if (!tpl.worked_examples.empty()) {
    system_blocks.push_back("Worked examples of the expected reasoning follow.");
    for (std::size_t i = 0; i < tpl.worked_examples.size(); ++i) {
      system_blocks.push_back("Example " + std::to_string(i + 1) + ":\n" + tpl.worked_examples[i]);
    }
  }

  std::vector<std::string> user_blocks;
  if (mode == PromptMode::no_cot) {
    user_blocks.push_back(tpl.direct_text);
    user_blocks.push_back(modification_line(modification_text));
  } else {
    user_blocks.push_back(task_text);
    user_blocks.push_back(modification_line(modification_text));
    for (std::size_t i = 0; i < tpl.subtask_headers.size(); ++i) {
      user_blocks.push_back("Subtask " + std::to_string(i + 1) + ": " + tpl.subtask_headers[i] + "\n" +
                            tpl.step_instructions[i]);
    }
  }
  user_blocks.push_back(contract);

  ChatRequest req;
  req.messages.push_back({Role::system, {Part::text(join_blocks(system_blocks))}});
  req.messages.push_back({Role::user, {Part::image(reference_image), Part::text(join_blocks(user_blocks))}});
  return req;
}

}  // namespace

std::string_view to_string(Scale scale) { return scale == Scale::image ? "image" : "object"; }

Scale parse_scale(std::string_view name) {
  if (name == "image") return Scale::image;
  if (name == "object") return Scale::object;
  throw Error(ErrorKind::InvalidConfig, "unknown scale \"" + std::string(name) + "\" (expected image|object)");
}

std::string_view to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::no_cot: return "no-cot";
    case PromptMode::circot_zero_shot: return "circot-0";
    case PromptMode::circot_few_shot: return "circot-fs";
  }
  return "circot-fs";
}

PromptMode parse_prompt_mode(std::string_view name) {
  if (name == "no-cot") return PromptMode::no_cot;
  if (name == "circot-0") return PromptMode::circot_zero_shot;
  if (name == "circot-fs") return PromptMode::circot_few_shot;
  throw Error(ErrorKind::InvalidConfig,
              "unknown prompt mode \"" + std::string(name) + "\" (expected no-cot|circot-0|circot-fs)");
}

const std::vector<std::string>& subtask_headers(Scale scale) {
  static const std::vector<std::string> image{"Image understanding", "Modification text understanding",
                                              "Modification implementation", "Target image caption generation"};
  static const std::vector<std::string> object{
      "Describe the Reference Image", "Understand the Modification Instructions", "Apply the Modifications",
      "Determine the Content of the Target Image"};
  return scale == Scale::image ? image : object;
}

std::string output_contract(Scale scale) {
  if (scale == Scale::image) {
    return "When you have finished all subtasks, end your reply with exactly one final line in this format:\n"
           "FINAL_CAPTION: <one-sentence caption of the target image>";
  }
  return "When you have finished all subtasks, end your reply with exactly these two final lines:\n"
         "EXISTENT_OBJECTS: [\"<object>\", ...]\n"
         "NONEXISTENT_OBJECTS: [\"<object>\", ...]\n"
         "Each list is a JSON array of strings. Write [] when a list is empty.";
}

std::string merged_output_contract() {
  return "When you have finished all subtasks, end your reply with exactly these three final lines:\n"
         "FINAL_CAPTION: <one-sentence caption of the target image>\n"
         "EXISTENT_OBJECTS: [\"<object>\", ...]\n"
         "NONEXISTENT_OBJECTS: [\"<object>\", ...]\n"
         "Each list is a JSON array of strings. Write [] when a list is empty.";
}

PromptTemplate parse_prompt_template(Scale scale, std::string_view template_text, std::string_view examples_text) {
  const std::string what = std::string(to_string(scale)) + " template";
  PromptTemplate tpl;
  tpl.scale = scale;
  for (auto& s : parse_sections(template_text, what)) {
    if (s.name == "system") {
      tpl.system_text = std::move(s.body);
    } else if (s.name == "task") {
      tpl.task_text = std::move(s.body);
    } else if (s.name == "merged_task") {
      tpl.merged_task_text = std::move(s.body);
    } else if (s.name == "direct") {
      tpl.direct_text = std::move(s.body);
    } else if (s.name == "subtask") {
      tpl.subtask_headers.push_back(std::move(s.arg));
      tpl.step_instructions.push_back(std::move(s.body));
    } else {
      throw Error(ErrorKind::MalformedRecord, what + ": unknown section @" + s.name);
    }
  }
  if (tpl.subtask_headers != subtask_headers(scale)) {
    throw Error(ErrorKind::MalformedRecord, what + ": subtask headers differ from the required four, in order");
  }
  if (tpl.system_text.empty() || tpl.task_text.empty() || tpl.direct_text.empty() || tpl.merged_task_text.empty()) {
    throw Error(ErrorKind::MalformedRecord, what + ": @system, @task, @merged_task and @direct are required");
  }
  for (auto& s : parse_sections(examples_text, what + " examples")) {
    if (s.name != "example") {
      throw Error(ErrorKind::MalformedRecord, what + " examples: unknown section @" + s.name);
    }
    tpl.worked_examples.push_back(std::move(s.body));
  }
  if (tpl.worked_examples.empty()) {
    throw Error(ErrorKind::MalformedRecord, what + " examples: at least one @example is required");
  }
  tpl.output_contract = output_contract(scale);
  return tpl;
}

const PromptLibrary& PromptLibrary::builtin() {
  static const PromptLibrary lib = [] {
    PromptLibrary l;
    l.image_ = parse_prompt_template(Scale::image, prompt_data::image_scale, prompt_data::image_examples);
    l.object_ = parse_prompt_template(Scale::object, prompt_data::object_scale, prompt_data::object_examples);
    return l;
  }();
  return lib;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  PromptLibrary l;
  l.image_ = parse_prompt_template(Scale::image, read_text_file(dir / "image_scale.txt"),
                                   read_text_file(dir / "image_examples.txt"));
  l.object_ = parse_prompt_template(Scale::object, read_text_file(dir / "object_scale.txt"),
                                    read_text_file(dir / "object_examples.txt"));
  return l;
}

PromptTemplate PromptLibrary::instantiate(Scale scale, PromptMode mode) const {
  PromptTemplate tpl = scale == Scale::image ? image_ : object_;
  if (mode != PromptMode::circot_few_shot) tpl.worked_examples.clear();
  return tpl;
}

ChatRequest build_prompt(Scale scale, PromptMode mode, const std::string& reference_image,
                         const std::string& modification_text, const PromptLibrary& library) {
  const auto tpl = library.instantiate(scale, mode);
  return assemble(tpl, mode, tpl.task_text, tpl.output_contract, reference_image, modification_text);
}

ChatRequest build_merged_prompt(PromptMode mode, const std::string& reference_image,
                                const std::string& modification_text, const PromptLibrary& library) {
  auto tpl = library.instantiate(Scale::image, mode);
  return assemble(tpl, mode, tpl.merged_task_text, merged_output_contract(), reference_image, modification_text);
}

}  // namespace cotmr
