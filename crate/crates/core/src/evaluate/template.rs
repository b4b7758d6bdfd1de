//! The in-context query template.
//!
//! Layout, LF line endings:
//!
//! ```text
//! Instruction: {instruction}      (only when the sequence carries one)
//!
//! Input: {input}
//! Output: {output}
//!
//! ...
//! Input: {test}
//! Output:
//! ```

use crate::domain::{Exemplar, ExemplarPool, ExemplarSequence, InstructionSet};
use crate::error::{Error, Result};

/// `Input: {input}\nOutput: {output}`
pub fn render_block(exemplar: &Exemplar) -> String {
    format!("Input: {}\nOutput: {}", exemplar.input, exemplar.output)
}

fn render_prefix(
    out: &mut String,
    sequence: &ExemplarSequence,
    pool: &ExemplarPool,
    instructions: Option<&InstructionSet>,
) -> Result<()> {
    if let Some(idx) = sequence.instruction() {
        let text = instructions
            .ok_or(Error::UnresolvedInstruction(idx))?
            .get(idx)?;
        out.push_str("Instruction: ");
        out.push_str(text);
        out.push_str("\n\n");
    }
    for &pos in sequence.exemplars() {
        let e = pool.get(pos)?;
        out.push_str("Input: ");
        out.push_str(&e.input);
        out.push_str("\nOutput: ");
        out.push_str(&e.output);
        out.push_str("\n\n");
    }
    Ok(())
}

/// Full query for one test input.
pub fn render_prompt(
    sequence: &ExemplarSequence,
    pool: &ExemplarPool,
    instructions: Option<&InstructionSet>,
    test_input: &str,
) -> Result<String> {
    let mut out = String::new();
    render_prefix(&mut out, sequence, pool, instructions)?;
    out.push_str("Input: ");
    out.push_str(test_input);
    out.push_str("\nOutput:");
    Ok(out)
}

/// The prompt without the test block and without the trailing blank line.
/// This is the text the sequence embedding is computed from.
pub fn render_context(
    sequence: &ExemplarSequence,
    pool: &ExemplarPool,
    instructions: Option<&InstructionSet>,
) -> Result<String> {
    let mut out = String::new();
    render_prefix(&mut out, sequence, pool, instructions)?;
    out.truncate(out.trim_end_matches('\n').len());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool() -> ExemplarPool {
        ExemplarPool::new(vec![
            Exemplar::new("0", "a", "b"),
            Exemplar::new("1", "172", "-682"),
            Exemplar::new("2", "47", "-182"),
        ])
        .unwrap()
    }

    #[test]
    fn single_exemplar_layout() {
        let s = ExemplarSequence::new(vec![0], None).unwrap();
        assert_eq!(
            render_prompt(&s, &pool(), None, "c").unwrap(),
            "Input: a\nOutput: b\n\nInput: c\nOutput:"
        );
    }

    #[test]
    fn instruction_line_comes_first() {
        let instr = InstructionSet::new(vec!["do X".into()]);
        let s = ExemplarSequence::new(vec![0], Some(0)).unwrap();
        let text = render_prompt(&s, &pool(), Some(&instr), "c").unwrap();
        assert!(text.starts_with("Instruction: do X\n\nInput: a\n"));
    }

    #[test]
    fn lr_example_matches_template() {
        let s = ExemplarSequence::new(vec![1, 2], None).unwrap();
        assert_eq!(
            render_prompt(&s, &pool(), None, "117").unwrap(),
            "Input: 172\nOutput: -682\n\nInput: 47\nOutput: -182\n\nInput: 117\nOutput:"
        );
    }

    #[test]
    fn order_changes_text() {
        let a = ExemplarSequence::new(vec![0, 1], None).unwrap();
        let b = ExemplarSequence::new(vec![1, 0], None).unwrap();
        assert_ne!(
            render_prompt(&a, &pool(), None, "t").unwrap(),
            render_prompt(&b, &pool(), None, "t").unwrap()
        );
    }

    #[test]
    fn context_of_singleton_is_its_block() {
        let p = pool();
        let s = ExemplarSequence::new(vec![2], None).unwrap();
        assert_eq!(
            render_context(&s, &p, None).unwrap(),
            render_block(p.get(2).unwrap())
        );
    }

    #[test]
    fn missing_instruction_set_is_unresolved() {
        let s = ExemplarSequence::new(vec![0], Some(3)).unwrap();
        assert!(matches!(
            render_prompt(&s, &pool(), None, "c"),
            Err(Error::UnresolvedInstruction(3))
        ));
        assert!(render_prompt(&ExemplarSequence::new(vec![9], None).unwrap(), &pool(), None, "c").is_err());
    }
}
