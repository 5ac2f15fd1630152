import { describe, expect, it } from 'vitest';

import { EnrollmentError, StudyApi } from '../src/api.js';
import { FakeStudyServer, makeItems } from './fakeServer.js';

describe('StudyApi', () => {
  it('parses the next item', async () => {
    const server = new FakeStudyServer('r1', makeItems(3));
    const api = new StudyApi('', server.fetch);
    const next = await api.fetchNext('r1');
    expect(next.done).toBe(false);
    if (!next.done) {
      expect(next.index).toBe(1);
      expect(next.total).toBe(3);
      expect(next.image_url).toContain(next.item_id);
    }
  });

  it('raises EnrollmentError on 404', async () => {
    const server = new FakeStudyServer('r1', makeItems(1));
    const api = new StudyApi('', server.fetch);
    await expect(api.fetchNext('ghost')).rejects.toBeInstanceOf(EnrollmentError);
  });

  it('reports a stored verdict', async () => {
    const server = new FakeStudyServer('r1', makeItems(2));
    const api = new StudyApi('', server.fetch);
    const next = await api.fetchNext('r1');
    if (next.done) throw new Error('unexpected done');
    const result = await api.submitVerdict('r1', next.item_id, 'real');
    expect(result).toBe('stored');
    expect(server.judgments.get(next.item_id)).toBe('real');
  });

  it('distinguishes duplicate from out-of-order conflicts', async () => {
    const items = makeItems(3);
    const server = new FakeStudyServer('r1', items);
    const api = new StudyApi('', server.fetch);
    await api.submitVerdict('r1', items[0].itemId, 'fake');
    expect(await api.submitVerdict('r1', items[0].itemId, 'fake')).toBe('duplicate');
    expect(await api.submitVerdict('r1', items[2].itemId, 'real')).toBe('out-of-order');
  });

  it('propagates network failures', async () => {
    const server = new FakeStudyServer('r1', makeItems(1));
    server.failureMode = 'reject';
    const api = new StudyApi('', server.fetch);
    await expect(api.submitVerdict('r1', 'item0', 'real')).rejects.toThrow();
  });

  it('walks a whole session to the done marker', async () => {
    const server = new FakeStudyServer('r1', makeItems(4));
    const api = new StudyApi('', server.fetch);
    for (let i = 0; i < 4; i += 1) {
      const next = await api.fetchNext('r1');
      if (next.done) throw new Error('done too early');
      await api.submitVerdict('r1', next.item_id, i % 2 ? 'real' : 'fake');
    }
    const finished = await api.fetchNext('r1');
    expect(finished.done).toBe(true);
    if (finished.done) {
      expect(finished.submitted).toBe(4);
    }
  });
});
