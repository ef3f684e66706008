//! One's-complement Internet checksum helpers.

/// Folds `data` into a 32-bit one's-complement accumulator.
pub fn accumulate(mut sum: u32, data: &[u8]) -> u32 {
    let mut chunks = data.chunks_exact(2);
    for pair in &mut chunks {
        sum = sum.wrapping_add(u32::from(u16::from_be_bytes([pair[0], pair[1]])));
    }
    if let [last] = chunks.remainder() {
        sum = sum.wrapping_add(u32::from(*last) << 8);
    }
    sum
}

/// Folds the carries of an accumulator and returns its complement.
pub fn finish(mut sum: u32) -> u16 {
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

pub fn internet_checksum(data: &[u8]) -> u16 {
    finish(accumulate(0, data))
}

/// Recomputes the checksum of the IPv4 header `header` in place.
pub fn fill_ipv4_checksum(header: &mut [u8]) {
    header[10] = 0;
    header[11] = 0;
    let ck = internet_checksum(header);
    header[10..12].copy_from_slice(&ck.to_be_bytes());
}

/// Incrementally updates checksum `check` after a 16-bit word changed from
/// `old` to `new` (RFC 1624, eqn. 3).
pub fn adjust(check: u16, old: u16, new: u16) -> u16 {
    let sum = u32::from(!check) + u32::from(!old) + u32::from(new);
    finish(sum)
}

/// [`adjust`] for a 32-bit field, applied as two 16-bit words.
pub fn adjust32(check: u16, old: u32, new: u32) -> u16 {
    let c = adjust(check, (old >> 16) as u16, (new >> 16) as u16);
    adjust(c, old as u16, new as u16)
}
