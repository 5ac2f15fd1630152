// @vitest-environment happy-dom
import { beforeEach, describe, expect, it } from 'vitest';

import { StudyApi } from '../src/api.js';
import { SessionController } from '../src/session.js';
import { FakeStudyServer, makeItems } from './fakeServer.js';

function setup(itemCount = 4, reviewer = 'r1') {
  const server = new FakeStudyServer(reviewer, makeItems(itemCount));
  const api = new StudyApi('', server.fetch);
  const root = document.createElement('div');
  document.body.appendChild(root);
  const controller = new SessionController(api, reviewer, root, { retryDelayMs: 5 });
  return { server, root, controller };
}

function clickVerdict(root: HTMLElement, verdict: 'real' | 'fake') {
  const button = root.querySelector<HTMLButtonElement>(`button[data-verdict="${verdict}"]`);
  if (!button) throw new Error(`no ${verdict} button rendered`);
  button.click();
}

async function settle(ms = 20) {
  await new Promise((resolve) => setTimeout(resolve, ms));
}

beforeEach(() => {
  document.body.innerHTML = '';
});

describe('SessionController', () => {
  it('renders progress 1/N with an image and exactly two verdict controls', async () => {
    const { root, controller } = setup(4);
    await controller.start();
    expect(root.textContent).toContain('Image 1 of 4');
    const image = root.querySelector<HTMLImageElement>('img.review-image');
    expect(image).not.toBeNull();
    expect(image!.getAttribute('src')).toMatch(/^\/api\/image\//);
    const buttons = root.querySelectorAll('button[data-verdict]');
    expect(buttons).toHaveLength(2);
  });

  it('advances after a verdict and finishes with the submitted count', async () => {
    const { server, root, controller } = setup(2);
    await controller.start();
    clickVerdict(root, 'real');
    await settle();
    expect(root.textContent).toContain('Image 2 of 2');
    clickVerdict(root, 'fake');
    await settle();
    expect(root.textContent).toContain('Session complete');
    expect(root.textContent).toContain('2 judgments');
    expect(server.judgments.size).toBe(2);
  });

  it('ignores a rapid double-click: exactly one judgment is stored', async () => {
    const { server, root, controller } = setup(3);
    await controller.start();
    const firstItem = controller.currentItem!.item_id;
    const button = root.querySelector<HTMLButtonElement>('button[data-verdict="real"]')!;
    button.click();
    button.click();
    button.click();
    await settle();
    expect(server.judgments.size).toBe(1);
    expect(server.judgments.get(firstItem)).toBe('real');
  });

  it('retains a verdict across a network failure and delivers it once', async () => {
    const { server, root, controller } = setup(3);
    await controller.start();
    const firstItem = controller.currentItem!.item_id;
    server.failureMode = 'reject';
    clickVerdict(root, 'fake');
    await settle();
    expect(root.textContent).toContain('will be retried');
    expect(server.judgments.size).toBe(0);
    server.failureMode = 'none';
    await settle(30); // automatic retry fires
    expect(server.judgments.get(firstItem)).toBe('fake');
    expect(server.judgments.size).toBe(1);
    expect(root.textContent).toContain('Image 2 of 3');
  });

  it('treats a duplicate conflict after a lost response as delivered once', async () => {
    const { server, root, controller } = setup(3);
    await controller.start();
    const firstItem = controller.currentItem!.item_id;
    server.failureMode = 'store-then-reject';
    clickVerdict(root, 'real');
    await settle(40); // retry hits the duplicate answer and advances
    expect(server.judgments.size).toBe(1);
    expect(server.judgments.get(firstItem)).toBe('real');
    expect(root.textContent).toContain('Image 2 of 3');
  });

  it('shows the session-elsewhere notice when another tab advanced first', async () => {
    const { server, root, controller } = setup(3);
    await controller.start();
    // Another tab judges the first two items behind this tab's back.
    const shadow = new StudyApi('', server.fetch);
    await shadow.submitVerdict('r1', controller.currentItem!.item_id, 'fake');
    const second = await shadow.fetchNext('r1');
    if (second.done) throw new Error('unexpected done');
    await shadow.submitVerdict('r1', second.item_id, 'fake');
    clickVerdict(root, 'real'); // stale item: out-of-order conflict
    await settle();
    expect(root.textContent).toContain('Session open elsewhere');
    expect(server.judgments.size).toBe(2);
  });

  it('shows the enrollment error screen for unknown reviewers', async () => {
    const server = new FakeStudyServer('r1', makeItems(2));
    const root = document.createElement('div');
    document.body.appendChild(root);
    const controller = new SessionController(
      new StudyApi('', server.fetch), 'ghost', root,
    );
    await controller.start();
    expect(root.textContent).toContain('Not enrolled');
  });

  it('resumes at the first unjudged item after a restart', async () => {
    const { server, root, controller } = setup(4);
    await controller.start();
    clickVerdict(root, 'real');
    await settle();
    // New controller over the same server state simulates reopening the page.
    const root2 = document.createElement('div');
    document.body.appendChild(root2);
    const resumed = new SessionController(
      new StudyApi('', server.fetch), 'r1', root2,
    );
    await resumed.start();
    expect(root2.textContent).toContain('Image 2 of 4');
  });

  it('never renders source tags or pathology names', async () => {
    const items = makeItems(6);
    const { root, controller } = (() => {
      const server = new FakeStudyServer('r1', items);
      const api = new StudyApi('', server.fetch);
      const el = document.createElement('div');
      document.body.appendChild(el);
      return { root: el, controller: new SessionController(api, 'r1', el, { retryDelayMs: 5 }) };
    })();
    const forbidden = [
      'real_data', 'pix2pix', 'pix2pix_n', 'stargan',
      'atelectasis', 'cardiomegaly', 'effusion', 'infiltration',
      'pneumonia', 'pneumothorax',
    ];
    await controller.start();
    while (controller.currentItem !== null) {
      const snapshot = root.innerHTML.toLowerCase();
      for (const word of forbidden) {
        expect(snapshot).not.toContain(word);
      }
      clickVerdict(root, 'fake');
      await settle(5);
    }
  });

  it('keyboard shortcuts are off by default and opt-in', async () => {
    const { server, root, controller } = setup(3);
    await controller.start();
    document.dispatchEvent(new KeyboardEvent('keydown', { key: 'r', bubbles: true }));
    await settle();
    expect(server.judgments.size).toBe(0);

    const server2 = new FakeStudyServer('r1', makeItems(3));
    const root2 = document.createElement('div');
    document.body.appendChild(root2);
    const withKeys = new SessionController(
      new StudyApi('', server2.fetch), 'r1', root2, { enableKeyboard: true },
    );
    await withKeys.start();
    document.dispatchEvent(new KeyboardEvent('keydown', { key: 'r', bubbles: true }));
    await settle();
    expect(server2.judgments.size).toBe(1);
  });
});
