//! bAbI dialog file format.
//!
//! Lines are `<n> <user utterance>\t<system utterance>`; knowledge-base
//! facts are `<n> <entity> <relation> <value>` without a tab; a blank line
//! separates dialogs and numbering restarts at 1.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{CandidateSet, DialogTurn, Dialogue, Speaker};

/// Companion candidates file for a dialog file: `<stem>-candidates.txt`
/// next to it.
pub fn candidates_path(dialog_path: &Path) -> PathBuf {
    let stem = dialog_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    dialog_path.with_file_name(format!("{stem}-candidates.txt"))
}

/// Parse a dialog file. The candidate set comes from the companion file when
/// present, otherwise from the distinct system utterances in the file itself.
pub fn parse_babi_dialogs(path: &Path) -> Result<(Vec<Dialogue>, CandidateSet)> {
    let text = std::fs::read_to_string(path)?;
    let (dialogs, mut candidates) = parse_babi_str(&text, &path.display().to_string())?;
    let companion = candidates_path(path);
    if companion.exists() {
        candidates = load_candidates(&companion)?;
    }
    Ok((dialogs, candidates))
}

/// One response per line; a leading `<n> ` counter (as in the published
/// candidate files) is stripped.
pub fn load_candidates(path: &Path) -> Result<CandidateSet> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let stripped = match line.split_once(' ') {
            Some((n, rest)) if n.parse::<usize>().is_ok() => rest,
            _ => line,
        };
        out.push(stripped.to_string());
    }
    CandidateSet::new(out)
}

pub fn parse_babi_str(text: &str, origin: &str) -> Result<(Vec<Dialogue>, CandidateSet)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };

    let mut dialogs = Vec::new();
    let mut responses = Vec::new();
    let mut turns: Vec<DialogTurn> = Vec::new();
    let mut pending_facts: Vec<String> = Vec::new();
    let mut expected_num = 1usize;

    let mut flush = |turns: &mut Vec<DialogTurn>, pending: &mut Vec<String>, line: usize| -> Result<()> {
        if !pending.is_empty() {
            return Err(err(line, "knowledge-base facts with no following turn".into()));
        }
        if !turns.is_empty() {
            dialogs.push(Dialogue {
                id: dialogs.len(),
                turns: std::mem::take(turns),
            });
        }
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            flush(&mut turns, &mut pending_facts, lineno)?;
            expected_num = 1;
            continue;
        }
        let (num_str, rest) = line
            .split_once(' ')
            .ok_or_else(|| err(lineno, format!("missing line number in {line:?}")))?;
        let num: usize = num_str
            .parse()
            .map_err(|_| err(lineno, format!("bad line number {num_str:?}")))?;
        if num != expected_num {
            return Err(err(
                lineno,
                format!("non-monotonic line number {num}, expected {expected_num}"),
            ));
        }
        expected_num += 1;

        match rest.split_once('\t') {
            Some((user, system)) => {
                turns.push(DialogTurn {
                    speaker: Speaker::User,
                    utterance: user.to_string(),
                    kb_facts: std::mem::take(&mut pending_facts),
                });
                turns.push(DialogTurn {
                    speaker: Speaker::System,
                    utterance: system.to_string(),
                    kb_facts: Vec::new(),
                });
                responses.push(system.to_string());
            }
            None => {
                // Tabless lines must be KB triples: entity relation value.
                if rest.split(' ').filter(|t| !t.is_empty()).count() != 3 {
                    return Err(err(
                        lineno,
                        format!("tabless line is not a KB triple: {rest:?}"),
                    ));
                }
                pending_facts.push(rest.to_string());
            }
        }
    }
    flush(&mut turns, &mut pending_facts, text.lines().count())?;

    if responses.is_empty() {
        return Err(Error::InvalidArg(format!(
            "{origin}: no dialog turns found"
        )));
    }
    Ok((dialogs, CandidateSet::new(responses)?))
}

/// Serialize dialogs back to the file format. Turn text is reproduced
/// losslessly.
pub fn serialize_babi(dialogs: &[Dialogue]) -> String {
    let mut out = String::new();
    for (di, dialog) in dialogs.iter().enumerate() {
        if di > 0 {
            out.push('\n');
        }
        let mut num = 1usize;
        let mut i = 0;
        while i < dialog.turns.len() {
            let user = &dialog.turns[i];
            for fact in &user.kb_facts {
                out.push_str(&format!("{num} {fact}\n"));
                num += 1;
            }
            let system = &dialog.turns[i + 1];
            out.push_str(&format!("{num} {}\t{}\n", user.utterance, system.utterance));
            num += 1;
            i += 2;
        }
    }
    out
}

pub fn write_babi_dialogs(dialogs: &[Dialogue], path: &Path) -> Result<()> {
    std::fs::write(path, serialize_babi(dialogs))?;
    Ok(())
}

pub fn write_candidates(candidates: &CandidateSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, c) in candidates.iter().enumerate() {
        out.push_str(&format!("{} {c}\n", i + 1));
    }
    std::fs::write(path, out)?;
    Ok(())
}
