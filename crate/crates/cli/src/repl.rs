//! Line-oriented interactive session. The world persists across
//! instructions unless `--fresh` is given.

use std::io::{BufRead, Write};

use anyhow::Result;
use saycan::domain::{Instruction, WorldState};
use saycan::planner::PlannerMode;
use saycan::rng::mix;
use saycan::simenv::reset;

use crate::render::{render_outcomes, render_state, render_trace};
use crate::{build_context, create, find_case, goal_met, log_lines, write_log_lines, Context, LogLine, ReplArgs};

const HELP: &str = "commands: :state  :reset  :seed N  :quit  (anything else is an instruction)\n";

pub struct Session {
    pub ctx: Context,
    pub state: WorldState,
    pub seed: u64,
    pub mode: PlannerMode,
    pub top_k: usize,
    pub fresh: bool,
    episode: u64,
}

/// What handling one line produced.
pub enum Reply {
    Text(String),
    /// Text plus log lines for an executed instruction.
    Episode(String, Vec<LogLine>),
    Quit,
}

impl Session {
    pub fn new(ctx: Context, seed: u64, mode: PlannerMode, top_k: usize, fresh: bool) -> Self {
        Self {
            state: reset(&ctx.scenario),
            ctx,
            seed,
            mode,
            top_k,
            fresh,
            episode: 0,
        }
    }

    pub fn handle(&mut self, line: &str) -> Result<Reply> {
        let line = line.trim();
        let mut words = line.split_whitespace();
        match words.next() {
            None => return Ok(Reply::Text(String::new())),
            Some(":quit") | Some(":q") | Some(":exit") => return Ok(Reply::Quit),
            Some(":state") => return Ok(Reply::Text(render_state(&self.state, &self.ctx.scenario))),
            Some(":reset") => {
                self.state = reset(&self.ctx.scenario);
                return Ok(Reply::Text("world reset\n".into()));
            }
            Some(":seed") => {
                return Ok(Reply::Text(match words.next().map(str::parse::<u64>) {
                    Some(Ok(n)) => {
                        self.seed = n;
                        self.episode = 0;
                        format!("seed {n}\n")
                    }
                    _ => "usage: :seed N\n".into(),
                }))
            }
            Some(":help") => return Ok(Reply::Text(HELP.into())),
            Some(w) if w.starts_with(':') => return Ok(Reply::Text(format!("unknown command {w}\n{HELP}"))),
            Some(_) => {}
        }
        if self.fresh {
            self.state = reset(&self.ctx.scenario);
        }
        let instruction = Instruction::new(line)?;
        let out = self.ctx.run(&instruction, &self.state, mix(self.seed, self.episode))?;
        let case = find_case(&self.ctx.scenario.id, line);
        let goal = goal_met(&out, case.as_ref());
        let lines = log_lines(&out, self.episode, self.mode, self.seed, goal);
        self.episode += 1;
        let mut text = render_trace(&out.trace, self.top_k);
        text.push_str(&render_outcomes(&out.trace, &out.outcomes));
        text.push_str(&render_state(&out.final_state, &self.ctx.scenario));
        self.state = out.final_state;
        Ok(Reply::Episode(text, lines))
    }
}

pub fn cmd_repl(a: &ReplArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<i32> {
    let ctx = build_context(&a.common, a.mode, a.k_examples)?;
    let mut log = a.log.as_deref().map(create).transpose()?;
    let mut session = Session::new(ctx, a.common.seed, a.mode, a.top_k, a.fresh);
    write!(out, "{HELP}")?;
    let mut line = String::new();
    loop {
        write!(out, "saycan> ")?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            break;
        }
        match session.handle(&line) {
            Ok(Reply::Quit) => break,
            Ok(Reply::Text(t)) => write!(out, "{t}")?,
            Ok(Reply::Episode(t, lines)) => {
                write!(out, "{t}")?;
                if let Some(w) = log.as_mut() {
                    write_log_lines(w, &lines)?;
                }
            }
            // A failed episode (say the scorer is down) should not end the
            // session.
            Err(e) => writeln!(out, "error: {}", crate::error_text(&e))?,
        }
    }
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }
    Ok(0)
}
