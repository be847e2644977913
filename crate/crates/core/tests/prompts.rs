use metasynth_core::generation::{PROMPT_1, PROMPT_2};
use metasynth_core::{render_prompt, PromptTemplate, TemplateId};

const CONTEXT: &str = "SP: first support abstract\n\nSP: second support abstract";

#[test]
fn prompt1_matches_golden_file() {
    let rendered = render_prompt(&PromptTemplate::prompt1(), CONTEXT).unwrap();
    assert_eq!(rendered.as_bytes(), include_bytes!("golden/prompt1.txt"));
}

#[test]
fn prompt2_matches_golden_file() {
    let rendered = render_prompt(&PromptTemplate::prompt2(), CONTEXT).unwrap();
    assert_eq!(rendered.as_bytes(), include_bytes!("golden/prompt2.txt"));
}

#[test]
fn builtin_lookup() {
    assert_eq!(PromptTemplate::builtin(TemplateId::Prompt1).unwrap().instruction(), PROMPT_1);
    assert_eq!(PromptTemplate::builtin(TemplateId::Prompt2).unwrap().instruction(), PROMPT_2);
    assert!(PromptTemplate::builtin(TemplateId::Custom).is_none());
    assert_eq!("prompt2".parse::<TemplateId>().unwrap(), TemplateId::Prompt2);
    assert!("prompt3".parse::<TemplateId>().is_err());
}
