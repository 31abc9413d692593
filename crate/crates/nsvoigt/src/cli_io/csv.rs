//! CSV diagnostics stream with a single writer thread behind a bounded
//! queue. Rows arrive in submission order, so output bytes are a pure
//! function of the submitted values; floats are written in shortest
//! round-trip form. The file is written to a temporary sibling and renamed
//! on completion.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, SyncSender};
use std::thread::JoinHandle;

use crate::{Error, Result};

/// Column schema of the flow run stream.
pub const FLOW_HEADER: &str = "step,t,E,dissipation_cum,work_cum,balance_residual,div_max,picard_iters";
/// Additional columns of the coupled stream.
pub const COUPLED_HEADER: &str =
    "step,t,E,dissipation_cum,work_cum,balance_residual,div_max,picard_iters,k_total,production,dissipation_k,clipped_mass,transfer_ok";
/// Schema version tag written as the first line.
pub const SCHEMA_VERSION: &str = "nsvoigt.csv.v1";

enum Msg {
    Row(String),
    Finish,
}

pub struct CsvStream {
    sender: Option<SyncSender<Msg>>,
    handle: Option<JoinHandle<std::io::Result<()>>>,
    path: PathBuf,
    tmp: PathBuf,
}

impl CsvStream {
    /// Opens the stream and writes the version line and header.
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let tmp = path.with_extension("csv.tmp");
        let file = std::fs::File::create(&tmp)?;
        let mut writer = BufWriter::new(file);
        writeln!(writer, "# schema={SCHEMA_VERSION}")?;
        writeln!(writer, "{header}")?;
        let (sender, receiver) = sync_channel::<Msg>(256);
        let handle = std::thread::spawn(move || -> std::io::Result<()> {
            while let Ok(msg) = receiver.recv() {
                match msg {
                    Msg::Row(row) => writeln!(writer, "{row}")?,
                    Msg::Finish => break,
                }
            }
            writer.flush()
        });
        Ok(CsvStream { sender: Some(sender), handle: Some(handle), path: path.to_path_buf(), tmp })
    }

    pub fn row(&self, row: String) -> Result<()> {
        self.sender
            .as_ref()
            .expect("stream already finished")
            .send(Msg::Row(row))
            .map_err(|_| Error::Io(std::io::Error::other("csv writer thread gone")))
    }

    /// Flushes, joins the writer and renames the file into place.
    pub fn finish(mut self) -> Result<()> {
        if let Some(sender) = self.sender.take() {
            let _ = sender.send(Msg::Finish);
        }
        if let Some(handle) = self.handle.take() {
            handle
                .join()
                .map_err(|_| Error::Io(std::io::Error::other("csv writer thread panicked")))??;
        }
        std::fs::rename(&self.tmp, &self.path)?;
        Ok(())
    }
}

impl Drop for CsvStream {
    fn drop(&mut self) {
        if let Some(sender) = self.sender.take() {
            let _ = sender.send(Msg::Finish);
        }
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_header_and_rows_in_order() {
        let dir = std::env::temp_dir().join("nsvoigt_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.csv");
        let stream = CsvStream::create(&path, FLOW_HEADER).unwrap();
        for i in 0..10 {
            stream.row(format!("{i},0.5,1,2,3,4,5,6")).unwrap();
        }
        stream.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# schema={SCHEMA_VERSION}"));
        assert_eq!(lines[1], FLOW_HEADER);
        assert_eq!(lines.len(), 12);
        assert!(lines[2].starts_with("0,"));
        assert!(lines[11].starts_with("9,"));
        std::fs::remove_file(&path).unwrap();
    }
}
