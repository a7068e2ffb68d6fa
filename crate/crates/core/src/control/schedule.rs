use std::io::{Read, Write};

use super::ControlError;
use crate::geometry::{aod_chain_angle, Angle2D, DriveFrequencies, OpticalChain};
use crate::stamp::RunStamp;

/// Per-shot readout angles, written as
/// `shot,theta_read_x,theta_read_y,drive_x,drive_y` with `#` comment lines.
pub fn write_schedule_csv<W: Write>(
    mut w: W,
    angles: &[Angle2D],
    chain: &OpticalChain,
    stamp: &RunStamp,
) -> Result<(), ControlError> {
    stamp.write_comments(&mut w)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["shot", "theta_read_x", "theta_read_y", "drive_x", "drive_y"])?;
    for (i, a) in angles.iter().enumerate() {
        let d = chain.drive_for(*a);
        let (dx, dy) = (
            if chain.steer_x { d.x } else { chain.base_freq },
            if chain.steer_y { d.y } else { chain.base_freq },
        );
        out.write_record([
            i.to_string(),
            a.theta_x.to_string(),
            a.theta_y.to_string(),
            dx.to_string(),
            dy.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a schedule. Rows give either `theta_read_x,theta_read_y` (μrad) or
/// `drive_x,drive_y` (Hz, converted through the chain); angles win when
/// both are present. Rows are taken in file order.
pub fn read_schedule_csv<R: Read>(
    r: R,
    chain: &OpticalChain,
) -> Result<Vec<Angle2D>, ControlError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let angles = (col("theta_read_x"), col("theta_read_y"));
    let drives = (col("drive_x"), col("drive_y"));
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, ControlError> {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>().map_err(|_| {
                ControlError::InvalidArgument(format!(
                    "schedule row {}: bad number {s:?}",
                    line + 1
                ))
            })
        };
        let a = match (angles, drives) {
            ((Some(x), Some(y)), _) => Angle2D::new(num(x)?, num(y)?),
            (_, (Some(x), Some(y))) => aod_chain_angle(
                DriveFrequencies {
                    x: num(x)?,
                    y: num(y)?,
                },
                chain,
            )?,
            _ => {
                return Err(ControlError::InvalidArgument(
                    "schedule needs theta_read_x/theta_read_y or drive_x/drive_y columns".into(),
                ))
            }
        };
        a.validate()?;
        out.push(a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let chain = OpticalChain::default();
        let angles = vec![
            Angle2D::new(0.0, -200.0),
            Angle2D::ZERO,
            Angle2D::new(0.0, 123.456),
        ];
        let mut buf = Vec::new();
        write_schedule_csv(&mut buf, &angles, &chain, &RunStamp::new(5, 6)).unwrap();
        assert_eq!(read_schedule_csv(&buf[..], &chain).unwrap(), angles);
    }

    #[test]
    fn drive_only_schedule() {
        let chain = OpticalChain::default();
        let text = "drive_x,drive_y\n80000000,85000000\n80000000,80000000\n";
        let a = read_schedule_csv(text.as_bytes(), &chain).unwrap();
        assert!((a[0].theta_y - 100.0).abs() < 1e-9);
        assert_eq!(a[1], Angle2D::ZERO);
        assert!(
            read_schedule_csv("drive_x,drive_y\n81000000,80000000\n".as_bytes(), &chain).is_err()
        );
        assert!(read_schedule_csv("a,b\n1,2\n".as_bytes(), &chain).is_err());
    }
}
