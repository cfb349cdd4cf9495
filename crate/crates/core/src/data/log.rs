//! Interaction-log ingestion and emission.
//!
//! Text format: one interaction per line, `user<TAB>item<TAB>behavior<TAB>timestamp`,
//! decimal integers. Lines starting with `#` are comments, except a header of the
//! form `#users=U items=I behaviors=K`. Item id 0 is reserved for padding.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{CasmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub user_id: u64,
    pub item_id: usize,
    pub behavior: usize,
    pub timestamp: u64,
}

/// One entry of a user's history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub item: usize,
    pub behavior: usize,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub user_id: u64,
    /// Sorted by timestamp; ties keep file order.
    pub events: Vec<Event>,
}

impl UserHistory {
    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.events.iter().map(|e| e.item)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionLog {
    users: Vec<UserHistory>,
    num_items: usize,
    num_behaviors: usize,
    behavior_names: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Optional sidecar with `behavior_id<TAB>name` lines.
    pub behavior_names: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Copy)]
struct Header {
    items: Option<usize>,
    behaviors: Option<usize>,
}

pub fn default_behavior_names(k: usize) -> Vec<String> {
    (0..k).map(|b| format!("behavior_{b}")).collect()
}

impl InteractionLog {
    /// Groups interactions per user (ascending user id) and sorts each history
    /// by timestamp, keeping input order for ties. Vocabulary sizes default to
    /// the data maxima when not given.
    pub fn from_interactions(
        interactions: impl IntoIterator<Item = Interaction>,
        num_items: Option<usize>,
        num_behaviors: Option<usize>,
    ) -> Result<Self> {
        let mut grouped: BTreeMap<u64, Vec<Event>> = BTreeMap::new();
        let (mut max_item, mut max_behavior) = (0usize, None::<usize>);
        for it in interactions {
            if it.item_id == 0 {
                return Err(CasmError::Data(format!(
                    "user {}: item id 0 is reserved for padding",
                    it.user_id
                )));
            }
            max_item = max_item.max(it.item_id);
            max_behavior = Some(max_behavior.map_or(it.behavior, |m: usize| m.max(it.behavior)));
            grouped.entry(it.user_id).or_default().push(Event {
                item: it.item_id,
                behavior: it.behavior,
                timestamp: it.timestamp,
            });
        }
        let num_items = num_items.unwrap_or(max_item);
        let num_behaviors = num_behaviors.unwrap_or(max_behavior.map_or(1, |m| m + 1));
        if max_item > num_items {
            return Err(CasmError::Data(format!("item id {max_item} exceeds item count {num_items}")));
        }
        if let Some(b) = max_behavior.filter(|&b| b >= num_behaviors) {
            return Err(CasmError::Data(format!("behavior id {b} not below behavior count {num_behaviors}")));
        }
        let users = grouped
            .into_iter()
            .map(|(user_id, mut events)| {
                events.sort_by_key(|e| e.timestamp);
                UserHistory { user_id, events }
            })
            .collect();
        Ok(Self { users, num_items, num_behaviors, behavior_names: default_behavior_names(num_behaviors) })
    }

    pub(crate) fn from_users(
        users: Vec<UserHistory>,
        num_items: usize,
        num_behaviors: usize,
        behavior_names: Vec<String>,
    ) -> Self {
        Self { users, num_items, num_behaviors, behavior_names }
    }

    /// Parses the tab-separated text format.
    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut header = Header::default();
        let mut interactions = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                parse_header(rest, &mut header, lineno)?;
                continue;
            }
            let interaction = parse_line(trimmed, lineno)?;
            if let Some(k) = header.behaviors {
                if interaction.behavior >= k {
                    return Err(CasmError::Data(format!(
                        "line {lineno}: behavior {} not below declared behavior count {k}",
                        interaction.behavior
                    )));
                }
            }
            interactions.push(interaction);
        }
        if interactions.is_empty() {
            return Err(CasmError::Data("no interactions found".into()));
        }
        Self::from_interactions(interactions, header.items, header.behaviors)
    }

    pub fn load(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)
            .map_err(|e| CasmError::Data(format!("cannot open {}: {e}", path.display())))?;
        let mut log = Self::parse(BufReader::new(file))?;
        if let Some(names) = &options.behavior_names {
            log.behavior_names = load_behavior_names(names, log.num_behaviors)?;
        }
        Ok(log)
    }

    /// Writes the header and all interactions in (user, time) order.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "#users={} items={} behaviors={}",
            self.users.len(),
            self.num_items,
            self.num_behaviors
        )?;
        for u in &self.users {
            for e in &u.events {
                writeln!(w, "{}\t{}\t{}\t{}", u.user_id, e.item, e.behavior, e.timestamp)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn users(&self) -> &[UserHistory] {
        &self.users
    }

    pub fn user(&self, user_id: u64) -> Option<&UserHistory> {
        self.users
            .binary_search_by_key(&user_id, |u| u.user_id)
            .ok()
            .map(|i| &self.users[i])
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_behaviors(&self) -> usize {
        self.num_behaviors
    }

    pub fn behavior_names(&self) -> &[String] {
        &self.behavior_names
    }

    pub fn set_behavior_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.num_behaviors {
            return Err(CasmError::Data(format!(
                "{} behavior names for {} behaviors",
                names.len(),
                self.num_behaviors
            )));
        }
        self.behavior_names = names;
        Ok(())
    }

    pub fn num_interactions(&self) -> usize {
        self.users.iter().map(|u| u.events.len()).sum()
    }

    /// Interaction count per behavior id.
    pub fn behavior_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_behaviors];
        for e in self.users.iter().flat_map(|u| &u.events) {
            counts[e.behavior] += 1;
        }
        counts
    }
}

fn parse_header(rest: &str, header: &mut Header, lineno: usize) -> Result<()> {
    let rest = rest.trim();
    if !rest.contains('=') {
        return Ok(());
    }
    for token in rest.split_whitespace() {
        let Some((key, value)) = token.split_once('=') else { continue };
        let parsed = || {
            value
                .parse::<usize>()
                .map_err(|_| CasmError::Data(format!("line {lineno}: bad header value `{token}`")))
        };
        match key {
            "items" => header.items = Some(parsed()?),
            "behaviors" => header.behaviors = Some(parsed()?),
            "users" => {
                parsed()?;
            }
            _ => {}
        }
    }
    Ok(())
}

fn parse_line(line: &str, lineno: usize) -> Result<Interaction> {
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(CasmError::Data(format!(
            "line {lineno}: expected 4 tab-separated fields, found {}",
            fields.len()
        )));
    }
    let num = |i: usize, name: &str| {
        fields[i]
            .parse::<u64>()
            .map_err(|_| CasmError::Data(format!("line {lineno}: invalid {name} `{}`", fields[i])))
    };
    let item_id = num(1, "item id")? as usize;
    if item_id == 0 {
        return Err(CasmError::Data(format!(
            "line {lineno}: item id 0 is reserved for padding; item ids start at 1"
        )));
    }
    Ok(Interaction {
        user_id: num(0, "user id")?,
        item_id,
        behavior: num(2, "behavior id")? as usize,
        timestamp: num(3, "timestamp")?,
    })
}

pub fn load_behavior_names(path: &Path, k: usize) -> Result<Vec<String>> {
    let file = File::open(path)
        .map_err(|e| CasmError::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut names = default_behavior_names(k);
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, name) = line.split_once('\t').ok_or_else(|| {
            CasmError::Data(format!("{} line {}: expected `id<TAB>name`", path.display(), idx + 1))
        })?;
        let id: usize = id.trim().parse().map_err(|_| {
            CasmError::Data(format!("{} line {}: invalid behavior id", path.display(), idx + 1))
        })?;
        if id >= k {
            return Err(CasmError::Data(format!(
                "{} line {}: behavior {id} not below behavior count {k}",
                path.display(),
                idx + 1
            )));
        }
        names[id] = name.trim().to_string();
    }
    Ok(names)
}
