from __future__ import annotations

from dataclasses import dataclass

INPUT_SLOT = "{obfuscated_code}"


@dataclass(frozen=True)
class PromptTemplate:
    task: str = ("Analyze the following obfuscated JavaScript code and provide a clean, "
                 "readable version while preserving exact functionality.")
    instructions: tuple[str, ...] = (
        "Decode all string obfuscations (hex, base64, unicode escapes)",
        "Replace meaningless variable names with descriptive ones",
        "Unpack compressed/encoded payloads (e.g., eval expressions)",
        "Simplify control flow (remove dead code, flatten conditionals)",
        "Reconstruct function calls from dynamic invocations",
        "Preserve original logic and behavior exactly",
    )
    input_slot: str = INPUT_SLOT
    output_directives: tuple[str, ...] = (
        "The original obfuscation techniques detected",
        "The deobfuscation steps applied",
        "The restored functionality and control flow",
    )

    def skeleton(self) -> str:
        steps = "\n".join(f"{i}. {text}" for i, text in enumerate(self.instructions, 1))
        notes = "\n".join(f"- {text}" for text in self.output_directives)
        return (f"Task Description:\n{self.task}\n\nInstructions:\n{steps}\n\n"
                f"Input: Obfuscated Code\n{self.input_slot}\n\n"
                "Expected Output:\nProvide the deobfuscated version with explanatory "
                f"comments that describe:\n{notes}\n")


DEFAULT_TEMPLATE = PromptTemplate()


def render_prompt(code: str, template: PromptTemplate = DEFAULT_TEMPLATE) -> str:
    if not code:
        raise ValueError("cannot render a prompt for empty code")
    head, sep, tail = template.skeleton().partition(template.input_slot)
    if not sep:
        raise ValueError("template has no input slot")
    # split once so a slot-like string inside the code is never re-expanded
    return head + code + tail
