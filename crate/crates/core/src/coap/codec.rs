use super::{CoapError, CoapMessage, Code, MessageType, MAX_PAYLOAD, MAX_TOKEN};

const MAX_OPTION_LEN: usize = 65535 + 269;

pub fn encode(m: &CoapMessage) -> Result<Vec<u8>, CoapError> {
    if m.token.len() > MAX_TOKEN {
        return Err(CoapError::InvalidToken(m.token.len()));
    }
    if m.payload.len() > MAX_PAYLOAD {
        return Err(CoapError::PayloadTooLarge(m.payload.len()));
    }
    if m.code == Code::EMPTY
        && (!m.token.is_empty() || !m.options.is_empty() || !m.payload.is_empty())
    {
        return Err(CoapError::MalformedEmpty);
    }
    let mut out = Vec::with_capacity(4 + m.token.len() + m.payload.len() + 16);
    out.push(0x40 | (m.mtype.bits() << 4) | m.token.len() as u8);
    out.push(m.code.byte());
    out.extend_from_slice(&m.message_id.to_be_bytes());
    out.extend_from_slice(&m.token);

    let mut options: Vec<&(u16, Vec<u8>)> = m.options.iter().collect();
    options.sort_by_key(|(n, _)| *n);
    let mut last = 0u16;
    for (number, value) in options {
        if value.len() > MAX_OPTION_LEN {
            return Err(CoapError::EncodingOverflow {
                number: *number,
                len: value.len(),
            });
        }
        let (dn, dext) = nibble(usize::from(number - last));
        let (ln, lext) = nibble(value.len());
        out.push((dn << 4) | ln);
        out.extend_from_slice(&dext);
        out.extend_from_slice(&lext);
        out.extend_from_slice(value);
        last = *number;
    }
    if !m.payload.is_empty() {
        out.push(0xff);
        out.extend_from_slice(&m.payload);
    }
    Ok(out)
}

fn nibble(v: usize) -> (u8, Vec<u8>) {
    if v < 13 {
        (v as u8, vec![])
    } else if v < 269 {
        (13, vec![(v - 13) as u8])
    } else {
        (14, ((v - 269) as u16).to_be_bytes().to_vec())
    }
}

pub fn decode(b: &[u8]) -> Result<CoapMessage, CoapError> {
    if b.len() < 4 {
        return Err(CoapError::TruncatedFrame);
    }
    let version = b[0] >> 6;
    if version != 1 {
        return Err(CoapError::BadVersion(version));
    }
    let mtype = MessageType::from_bits(b[0] >> 4);
    let tkl = b[0] & 0x0f;
    if tkl as usize > MAX_TOKEN {
        return Err(CoapError::IllegalTokenLength(tkl));
    }
    let code = Code::from_byte(b[1]);
    let message_id = u16::from_be_bytes([b[2], b[3]]);
    let mut pos = 4;
    let token = take(b, &mut pos, tkl as usize)?.to_vec();

    let mut options = Vec::new();
    let mut number: u32 = 0;
    let mut payload = Vec::new();
    while pos < b.len() {
        let head = b[pos];
        pos += 1;
        if head == 0xff {
            if pos == b.len() {
                return Err(CoapError::PayloadMarkerWithoutPayload);
            }
            payload = b[pos..].to_vec();
            break;
        }
        let delta = extended(b, &mut pos, head >> 4)?;
        let len = extended(b, &mut pos, head & 0x0f)?;
        number += delta as u32;
        if number > u32::from(u16::MAX) {
            return Err(CoapError::OptionNumberOverflow);
        }
        let value = take(b, &mut pos, len)?.to_vec();
        options.push((number as u16, value));
    }
    if payload.len() > MAX_PAYLOAD {
        return Err(CoapError::PayloadTooLarge(payload.len()));
    }
    if code == Code::EMPTY && (!token.is_empty() || !options.is_empty() || !payload.is_empty()) {
        return Err(CoapError::MalformedEmpty);
    }
    Ok(CoapMessage {
        mtype,
        code,
        message_id,
        token,
        options,
        payload,
    })
}

fn take<'a>(b: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], CoapError> {
    let end = pos.checked_add(n).ok_or(CoapError::TruncatedFrame)?;
    let s = b.get(*pos..end).ok_or(CoapError::TruncatedFrame)?;
    *pos = end;
    Ok(s)
}

fn extended(b: &[u8], pos: &mut usize, nib: u8) -> Result<usize, CoapError> {
    match nib {
        0..=12 => Ok(nib as usize),
        13 => Ok(take(b, pos, 1)?[0] as usize + 13),
        14 => {
            let s = take(b, pos, 2)?;
            Ok(u16::from_be_bytes([s[0], s[1]]) as usize + 269)
        }
        _ => Err(CoapError::InvalidOptionNibble),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coap::option;

    #[test]
    fn get_vector() {
        let m = CoapMessage::request(MessageType::Con, Code::GET, "/1663/0/0")
            .with_token(&[0xc1]);
        let m = CoapMessage { message_id: 0x1234, ..m };
        assert_eq!(
            encode(&m).unwrap(),
            [0x41, 0x01, 0x12, 0x34, 0xc1, 0xb4, 0x31, 0x36, 0x36, 0x33, 0x01, 0x30, 0x01, 0x30]
        );
    }

    #[test]
    fn empty_ack_vector() {
        assert_eq!(encode(&CoapMessage::empty_ack(7)).unwrap(), [0x60, 0x00, 0x00, 0x07]);
    }

    #[test]
    fn extended_nibbles() {
        let m = CoapMessage::new(MessageType::Non, Code::GET, 1)
            .with_option(option::URI_QUERY, vec![b'a'; 20])
            .with_option(300, vec![b'b'; 300]);
        let bytes = encode(&m).unwrap();
        // delta 15 -> 13+2, length 20 -> 13+7
        assert_eq!(&bytes[4..7], &[0xdd, 2, 7]);
        assert_eq!(decode(&bytes).unwrap().options, m.options);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode(&[0x40, 0, 0]), Err(CoapError::TruncatedFrame));
        assert_eq!(decode(&[0x80, 0, 0, 0]), Err(CoapError::BadVersion(2)));
        assert_eq!(decode(&[0x49, 1, 0, 0]), Err(CoapError::IllegalTokenLength(9)));
        assert_eq!(decode(&[0x42, 1, 0, 0, 1]), Err(CoapError::TruncatedFrame));
        assert_eq!(
            decode(&[0x40, 1, 0, 0, 0xff]),
            Err(CoapError::PayloadMarkerWithoutPayload)
        );
        assert_eq!(decode(&[0x40, 1, 0, 0, 0xf1, 0]), Err(CoapError::InvalidOptionNibble));
        assert_eq!(decode(&[0x60, 0, 0, 0, 0xff, 1]), Err(CoapError::MalformedEmpty));
    }

    #[test]
    fn encode_errors() {
        let m = CoapMessage::new(MessageType::Con, Code::GET, 0).with_token(&[0; 9]);
        assert_eq!(encode(&m), Err(CoapError::InvalidToken(9)));
        let m = CoapMessage::new(MessageType::Con, Code::GET, 0).with_payload(vec![0; 1025]);
        assert_eq!(encode(&m), Err(CoapError::PayloadTooLarge(1025)));
        let m = CoapMessage::new(MessageType::Con, Code::GET, 0)
            .with_option(11, vec![0; MAX_OPTION_LEN + 1]);
        assert!(matches!(encode(&m), Err(CoapError::EncodingOverflow { .. })));
        let m = CoapMessage::empty_ack(1).with_token(&[1]);
        assert_eq!(encode(&m), Err(CoapError::MalformedEmpty));
    }

    #[test]
    fn no_marker_without_payload() {
        let m = CoapMessage::request(MessageType::Non, Code::GET, "/a");
        assert!(!encode(&m).unwrap().contains(&0xff));
    }
}
