//! Eight-byte on-air layout: `seq` (u32 LE), `command` (u8), `flags` (u8),
//! checksum (u16 LE, Fletcher-16 over the first six bytes).
//!
//! Only `seq` and `command` are meaningful. Flags bit 0 marks a
//! receiver-to-sender echo; the other bits are reserved and must be zero.
//! The simulator uses the frame length for airtime; the encoder exists so
//! the length is grounded in an actual layout.

use thiserror::Error;

use super::{ChannelId, Direction, EStopCommand, StatusFrame};
use crate::sim::SimTime;

pub const FRAME_BYTES: usize = 8;

const FLAG_ECHO: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("checksum mismatch: computed {computed:#06x}, frame carries {carried:#06x}")]
    Checksum { computed: u16, carried: u16 },
    #[error("unknown command byte {0:#04x}")]
    Command(u8),
    #[error("reserved flag bits set: {0:#04x}")]
    ReservedFlags(u8),
}

fn fletcher16(bytes: &[u8]) -> u16 {
    let (mut a, mut b) = (0u16, 0u16);
    for &byte in bytes {
        a = (a + byte as u16) % 255;
        b = (b + a) % 255;
    }
    (b << 8) | a
}

pub fn encode_frame(frame: &StatusFrame) -> [u8; FRAME_BYTES] {
    let mut out = [0u8; FRAME_BYTES];
    out[..4].copy_from_slice(&frame.seq.to_le_bytes());
    out[4] = frame.command.to_byte();
    out[5] = match frame.direction {
        Direction::SenderToReceiver => 0,
        Direction::ReceiverToSender => FLAG_ECHO,
    };
    let sum = fletcher16(&out[..6]);
    out[6..].copy_from_slice(&sum.to_le_bytes());
    out
}

/// Rebuilds a frame from its bytes. Channel and arrival time are not on the
/// wire, so the caller supplies them.
pub fn decode_frame(
    bytes: &[u8; FRAME_BYTES],
    channel: ChannelId,
    origin_time: SimTime,
) -> Result<StatusFrame, WireError> {
    let carried = u16::from_le_bytes([bytes[6], bytes[7]]);
    let computed = fletcher16(&bytes[..6]);
    if carried != computed {
        return Err(WireError::Checksum { computed, carried });
    }
    let command = EStopCommand::from_byte(bytes[4]).ok_or(WireError::Command(bytes[4]))?;
    let flags = bytes[5];
    if flags & !FLAG_ECHO != 0 {
        return Err(WireError::ReservedFlags(flags));
    }
    let direction = if flags & FLAG_ECHO != 0 {
        Direction::ReceiverToSender
    } else {
        Direction::SenderToReceiver
    };
    Ok(StatusFrame {
        seq: u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
        command,
        origin_time,
        channel,
        direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn any_command() -> impl Strategy<Value = EStopCommand> {
        prop::sample::select(EStopCommand::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn roundtrip(seq in any::<u32>(), command in any_command(), echo in any::<bool>()) {
            let frame = StatusFrame {
                seq,
                command,
                origin_time: SimTime::from_us(17),
                channel: ChannelId::FastB,
                direction: if echo { Direction::ReceiverToSender } else { Direction::SenderToReceiver },
            };
            let bytes = encode_frame(&frame);
            prop_assert_eq!(decode_frame(&bytes, frame.channel, frame.origin_time), Ok(frame));
        }

        #[test]
        fn single_bit_flips_are_detected(seq in any::<u32>(), bit in 0usize..64) {
            let frame = StatusFrame {
                seq,
                command: EStopCommand::Run,
                origin_time: SimTime::ZERO,
                channel: ChannelId::Slow,
                direction: Direction::SenderToReceiver,
            };
            let mut bytes = encode_frame(&frame);
            bytes[bit / 8] ^= 1 << (bit % 8);
            prop_assert!(decode_frame(&bytes, frame.channel, frame.origin_time).is_err());
        }
    }

    #[test]
    fn unknown_command_rejected() {
        let mut bytes = [1, 0, 0, 0, 9, 0, 0, 0];
        let sum = fletcher16(&bytes[..6]);
        bytes[6..].copy_from_slice(&sum.to_le_bytes());
        assert_eq!(
            decode_frame(&bytes, ChannelId::FastA, SimTime::ZERO),
            Err(WireError::Command(9))
        );
    }
}
