use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::Args;
use crossterm::event::{self, Event, KeyCode, KeyEventKind, KeyModifiers};
use crossterm::{cursor, execute, queue, terminal};
use fsim_core::ir::NOOP;
use fsim_core::runtime::{default_key_map, render_ansi, Episode, Key, RenderConfig};

use crate::util::{fail, load_program, CmdResult, Exit, OrExit};

#[derive(Args)]
pub struct PlayArgs {
    pub file: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simulation steps per second.
    #[arg(long, default_value_t = 15)]
    pub fps: u32,
}

/// Restores the terminal however play mode exits.
struct RawScreen;

impl RawScreen {
    fn enter() -> std::io::Result<Self> {
        terminal::enable_raw_mode()?;
        execute!(std::io::stdout(), terminal::EnterAlternateScreen, cursor::Hide)?;
        Ok(RawScreen)
    }
}

impl Drop for RawScreen {
    fn drop(&mut self) {
        let _ = execute!(std::io::stdout(), cursor::Show, terminal::LeaveAlternateScreen);
        let _ = terminal::disable_raw_mode();
    }
}

fn key_of(code: KeyCode) -> Option<Key> {
    Some(match code {
        KeyCode::Left => Key::Left,
        KeyCode::Right => Key::Right,
        KeyCode::Up => Key::Up,
        KeyCode::Down => Key::Down,
        KeyCode::Enter => Key::Enter,
        KeyCode::Char(' ') => Key::Space,
        KeyCode::Char(c) => Key::Char(c),
        _ => return None,
    })
}

enum Control {
    Quit,
    Restart,
}

pub fn run(args: PlayArgs) -> CmdResult {
    if args.fps == 0 {
        return Err(fail(Exit::Usage, "--fps must be at least 1"));
    }
    let p = load_program(&args.file)?;
    let keys = default_key_map(&p.actions);
    let tick = Duration::from_secs_f64(1.0 / args.fps as f64);
    let _screen = RawScreen::enter().or_exit(Exit::Usage)?;
    let mut out = std::io::stdout();
    let mut seed = args.seed;
    'episodes: loop {
        let mut ep = Episode::new(&p, seed, RenderConfig::default()).or_exit(Exit::Validation)?;
        let mut total = 0.0;
        loop {
            let started = Instant::now();
            let mut action: Option<String> = None;
            let mut control = None;
            while let Some(left) = tick.checked_sub(started.elapsed()) {
                if !event::poll(left).or_exit(Exit::Usage)? {
                    break;
                }
                if let Event::Key(k) = event::read().or_exit(Exit::Usage)? {
                    if k.kind == KeyEventKind::Release {
                        continue;
                    }
                    match k.code {
                        KeyCode::Esc | KeyCode::Char('q') => control = Some(Control::Quit),
                        KeyCode::Char('c') if k.modifiers.contains(KeyModifiers::CONTROL) => control = Some(Control::Quit),
                        KeyCode::Char('r') => control = Some(Control::Restart),
                        code => {
                            if let Some(a) = key_of(code).and_then(|key| keys.action(key)) {
                                action = Some(a.to_string());
                            }
                        }
                    }
                }
            }
            match control {
                Some(Control::Quit) => break 'episodes,
                Some(Control::Restart) => {
                    seed += 1;
                    continue 'episodes;
                }
                None => {}
            }
            if !ep.done() {
                let r = ep.step(action.as_deref().unwrap_or(NOOP)).or_exit(Exit::Validation)?;
                total += r.reward;
            }
            let frame = ep.observation().raster.as_ref().map(render_ansi).unwrap_or_default();
            let status = if ep.done() { "game over: r restarts, q quits" } else { "q quits, r restarts" };
            queue!(out, cursor::MoveTo(0, 0), terminal::Clear(terminal::ClearType::All)).or_exit(Exit::Usage)?;
            write!(
                out,
                "{}\r\n{frame}step {}  score {total}  {}\r\n{status}\r\n",
                p.metadata.name,
                ep.state().step_count,
                keys.legend()
            )
            .or_exit(Exit::Usage)?;
            out.flush().or_exit(Exit::Usage)?;
        }
    }
    Ok(())
}
