//! Keyboard mapping for interactive play. The terminal loop lives in the
//! command-line tool; everything here is pure.

/// A key press, reduced to what play mode distinguishes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Key {
    Left,
    Right,
    Up,
    Down,
    Space,
    Enter,
    Char(char),
}

/// Key bindings for one program's action set.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyMap {
    bindings: Vec<(Key, String)>,
}

impl KeyMap {
    /// Action for a key, if bound.
    pub fn action(&self, key: Key) -> Option<&str> {
        let key = match key {
            Key::Char(c) => Key::Char(c.to_ascii_lowercase()),
            k => k,
        };
        self.bindings.iter().find(|(k, _)| *k == key).map(|(_, a)| a.as_str())
    }

    pub fn bindings(&self) -> &[(Key, String)] {
        &self.bindings
    }

    /// One-line legend, e.g. `←/a LEFT  →/d RIGHT`.
    pub fn legend(&self) -> String {
        let mut parts: Vec<(String, Vec<String>)> = Vec::new();
        for (k, a) in &self.bindings {
            let label = match k {
                Key::Left => "\u{2190}".to_string(),
                Key::Right => "\u{2192}".to_string(),
                Key::Up => "\u{2191}".to_string(),
                Key::Down => "\u{2193}".to_string(),
                Key::Space => "space".to_string(),
                Key::Enter => "enter".to_string(),
                Key::Char(c) => c.to_string(),
            };
            match parts.iter_mut().find(|(name, _)| name == a) {
                Some((_, keys)) => keys.push(label),
                None => parts.push((a.clone(), vec![label])),
            }
        }
        parts.iter().map(|(a, ks)| format!("{} {a}", ks.join("/"))).collect::<Vec<_>>().join("  ")
    }
}

/// Binds arrows and WASD to actions named after directions, space and enter
/// to FIRE/JUMP-like actions, and digits to the remaining actions in order.
/// NOOP is what happens when no key is pressed, so it gets no key.
pub fn default_key_map(actions: &[String]) -> KeyMap {
    let mut bindings: Vec<(Key, String)> = Vec::new();
    let has = |name: &str| actions.iter().find(|a| a.eq_ignore_ascii_case(name)).cloned();
    let named: [(&[Key], &[&str]); 6] = [
        (&[Key::Left, Key::Char('a')], &["LEFT", "WEST"]),
        (&[Key::Right, Key::Char('d')], &["RIGHT", "EAST"]),
        (&[Key::Up, Key::Char('w')], &["UP", "NORTH", "THRUST"]),
        (&[Key::Down, Key::Char('s')], &["DOWN", "SOUTH"]),
        (&[Key::Space], &["FIRE", "JUMP", "FLAP", "SHOOT"]),
        (&[Key::Enter], &["START", "SELECT"]),
    ];
    for (keys, names) in named {
        if let Some(a) = names.iter().find_map(|n| has(n)) {
            for k in keys {
                bindings.push((*k, a.clone()));
            }
        }
    }
    let mut digit = 1u32;
    for a in actions {
        if a == crate::ir::NOOP || bindings.iter().any(|(_, b)| b == a) {
            continue;
        }
        if let Some(c) = char::from_digit(digit, 10) {
            bindings.push((Key::Char(c), a.clone()));
            digit += 1;
        }
    }
    KeyMap { bindings }
}
